//! Shared test support: an explicit dense dictionary and an independent
//! coordinate-descent Lasso solver, both deliberately written from the model
//! definition alone so they can serve as oracles for the matrix-free paths.

#![allow(dead_code)]

use convlasso::{Activation, ActivationSet, MultiSignal, ShapeBank};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Explicit dense dictionary: `dn x kn`, column `(r, j)` holds neuron r's
/// waveform with onset at sample j, clipped at the right edge.
pub struct DenseDictionary {
    pub k: usize,
    pub d: usize,
    pub t: usize,
    pub n: usize,
    /// column-major: h[col * dn + row], row = p * n + sample
    pub h: Vec<f64>,
}

impl DenseDictionary {
    pub fn build(shapes: &ShapeBank, n: usize) -> DenseDictionary {
        let (k, d, t) = (shapes.k(), shapes.d(), shapes.t());
        let dn = d * n;
        let kn = k * n;
        let mut h = vec![0.0; dn * kn];
        for r in 0..k {
            for j in 0..n {
                let col = r * n + j;
                for p in 0..d {
                    let wf = shapes.waveform(r, p);
                    for (tau, &w) in wf.iter().enumerate() {
                        if j + tau < n {
                            h[col * dn + p * n + j + tau] = w;
                        }
                    }
                }
            }
        }
        DenseDictionary { k, d, t, n, h }
    }

    pub fn column(&self, r: usize, j: usize) -> &[f64] {
        let dn = self.d * self.n;
        let col = r * self.n + j;
        &self.h[col * dn..(col + 1) * dn]
    }

    /// H a for a dense coefficient vector of length kn.
    pub fn forward(&self, a: &[f64]) -> Vec<f64> {
        let dn = self.d * self.n;
        let mut out = vec![0.0; dn];
        for (col, &c) in a.iter().enumerate() {
            if c != 0.0 {
                let column = &self.h[col * dn..(col + 1) * dn];
                for (o, &v) in out.iter_mut().zip(column) {
                    *o += c * v;
                }
            }
        }
        out
    }

    /// H^T s for a dense signal vector of length dn.
    pub fn correlate(&self, s: &[f64]) -> Vec<f64> {
        let dn = self.d * self.n;
        let kn = self.k * self.n;
        (0..kn)
            .map(|col| {
                self.h[col * dn..(col + 1) * dn]
                    .iter()
                    .zip(s)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn gram(&self, r1: usize, j1: usize, r2: usize, j2: usize) -> f64 {
        self.column(r1, j1)
            .iter()
            .zip(self.column(r2, j2))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Cyclic coordinate descent on the dense dictionary: the independent Lasso
/// oracle for desk-scale instances.
pub fn dense_cd_lasso(dict: &DenseDictionary, y: &[f64], lambda: f64) -> Vec<f64> {
    let dn = dict.d * dict.n;
    let kn = dict.k * dict.n;
    assert_eq!(y.len(), dn);
    let norms: Vec<f64> = (0..kn)
        .map(|col| dict.h[col * dn..(col + 1) * dn].iter().map(|v| v * v).sum())
        .collect();
    let mut x = vec![0.0; kn];
    let mut r = y.to_vec();
    for _sweep in 0..200_000 {
        let mut max_step = 0.0_f64;
        for col in 0..kn {
            if norms[col] == 0.0 {
                continue;
            }
            let column = &dict.h[col * dn..(col + 1) * dn];
            let old = x[col];
            let rho: f64 =
                column.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + old * norms[col];
            let new = soft(rho, lambda) / norms[col];
            if new != old {
                for (ri, &hv) in r.iter_mut().zip(column) {
                    *ri -= (new - old) * hv;
                }
                x[col] = new;
                max_step = max_step.max((new - old).abs());
            }
        }
        if max_step <= 1e-13 {
            break;
        }
    }
    x
}

fn soft(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

pub fn lasso_objective_dense(dict: &DenseDictionary, y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let fit = dict.forward(x);
    let res: f64 = y
        .iter()
        .zip(&fit)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    0.5 * res + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Random shape bank with finite values and no all-zero neuron.
pub fn random_bank(rng: &mut ChaCha8Rng, k: usize, d: usize, t: usize) -> ShapeBank {
    loop {
        let wf: Vec<f64> = (0..k * d * t)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        if let Ok(bank) = ShapeBank::new(k, d, t, wf) {
            return bank;
        }
    }
}

/// Random sparse activations with onsets that keep shapes inside the signal.
pub fn random_acts(
    rng: &mut ChaCha8Rng,
    k: usize,
    n: usize,
    t: usize,
    density: f64,
) -> ActivationSet {
    let mut entries = Vec::new();
    for r in 0..k {
        for j in 0..=n - t {
            if rng.random::<f64>() < density {
                let amplitude = (rng.random::<f64>() * 1.5 + 0.5)
                    * if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                entries.push(Activation {
                    neuron: r,
                    sample: j,
                    amplitude,
                });
            }
        }
    }
    ActivationSet::new(k, n, entries).expect("random entries are valid")
}

pub fn signal_from_vec(d: usize, n: usize, v: Vec<f64>) -> MultiSignal {
    MultiSignal::from_samples(d, n, v).expect("test signal valid")
}
