//! Matrix-free dictionary arithmetic.
//!
//! The dictionary column for coordinate `(r, j)` is neuron `r`'s waveform
//! placed with its onset at sample `j`. The generative model only places
//! activations at `j <= n - t`, so simulated shapes always fit; the solver
//! additionally defines columns for every `j < n` with the part extending
//! past the signal clipped off, so optimality checks are well defined at the
//! right edge. Functions below that accept arbitrary `j` use the clipped
//! convention.

use crate::activation::ActivationSet;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::shapes::ShapeBank;
use crate::signal::MultiSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

/// Power-iteration parameters for [`lipschitz_bound`]. Fixed so step sizes
/// are reproducible across runs.
const POWER_MAX_ITER: usize = 100;
const POWER_TOL: f64 = 1e-7;
const POWER_SEED: u64 = 0x7031_7465_7261_7465;
pub(crate) const POWER_SAFETY: f64 = 1.02;

/// Adds `coeff` times dictionary column `(r, j)` into `sig`, clipping the
/// waveform at the right edge of the signal.
#[inline]
pub(crate) fn accumulate_column(
    sig: &mut MultiSignal,
    shapes: &ShapeBank,
    r: usize,
    j: usize,
    coeff: f64,
) {
    let n = sig.n();
    let span = shapes.t().min(n - j);
    for p in 0..shapes.d() {
        let wf = shapes.waveform(r, p);
        let out = &mut sig.electrode_mut(p)[j..j + span];
        for (o, w) in out.iter_mut().zip(&wf[..span]) {
            *o += coeff * w;
        }
    }
}

/// Inner product of dictionary column `(r, j)` with a signal, clipping at the
/// right edge.
#[inline]
pub(crate) fn column_dot(shapes: &ShapeBank, sig: &MultiSignal, r: usize, j: usize) -> f64 {
    let n = sig.n();
    let span = shapes.t().min(n - j);
    let mut acc = 0.0;
    for p in 0..shapes.d() {
        let wf = shapes.waveform(r, p);
        let row = &sig.electrode(p)[j..j + span];
        for (x, w) in row.iter().zip(&wf[..span]) {
            acc += x * w;
        }
    }
    acc
}

/// Renders the noiseless model: the superposition of every activation's
/// shape, clipped at the right edge. This is the solver-side reconstruction
/// `H a` that accepts activations anywhere in `[0, n)`.
pub fn reconstruct(shapes: &ShapeBank, acts: &ActivationSet, n: usize) -> Result<MultiSignal> {
    if acts.k() != shapes.k() {
        return Err(Error::dim(format!(
            "activation set has k={}, shape bank has k={}",
            acts.k(),
            shapes.k()
        )));
    }
    if acts.n() > n {
        return Err(Error::dim(format!(
            "activation set spans n={} samples but output has n={n}",
            acts.n()
        )));
    }
    let mut out = MultiSignal::zeros(shapes.d(), n)?;
    for a in acts.iter() {
        accumulate_column(&mut out, shapes, a.neuron, a.sample, a.amplitude);
    }
    Ok(out)
}

/// Renders the generative model: like [`reconstruct`], but every activation
/// must satisfy `j <= n - t` so that shapes fit entirely inside the signal.
pub fn forward(shapes: &ShapeBank, acts: &ActivationSet, n: usize) -> Result<MultiSignal> {
    if n < shapes.t() {
        return Err(Error::dim(format!(
            "signal length n={n} is shorter than shape length t={}",
            shapes.t()
        )));
    }
    let last_fit = n - shapes.t();
    for a in acts.iter() {
        if a.sample > last_fit {
            return Err(Error::ActivationOutOfRange {
                neuron: a.neuron,
                sample: a.sample,
                k: shapes.k(),
                n: last_fit + 1,
            });
        }
    }
    reconstruct(shapes, acts, n)
}

/// Residual `y - H a` with clipped edge columns.
pub fn residual(shapes: &ShapeBank, y: &MultiSignal, acts: &ActivationSet) -> Result<MultiSignal> {
    if y.d() != shapes.d() {
        return Err(Error::dim(format!(
            "signal has d={}, shape bank has d={}",
            y.d(),
            shapes.d()
        )));
    }
    let mut res = y.clone();
    for a in acts.iter() {
        accumulate_column(&mut res, shapes, a.neuron, a.sample, -a.amplitude);
    }
    Ok(res)
}

/// Correlation of every dictionary column in `window` with a signal:
/// `out[r * window.len() + (j - window.start)] = <H_(r,j), sig>`.
///
/// Samples past the end of the signal are treated as zero, so the window may
/// reach the right edge. The full-signal correlation is `window = 0..n`.
pub fn correlate(shapes: &ShapeBank, sig: &MultiSignal, window: Range<usize>) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::arg("empty correlation window".to_string()));
    }
    if window.end > sig.n() {
        return Err(Error::arg(format!(
            "window {}..{} exceeds signal length {}",
            window.start,
            window.end,
            sig.n()
        )));
    }
    if sig.d() != shapes.d() {
        return Err(Error::dim(format!(
            "signal has d={}, shape bank has d={}",
            sig.d(),
            shapes.d()
        )));
    }
    let width = window.len();
    let n = sig.n();
    let t = shapes.t();
    let mut out = vec![0.0; shapes.k() * width];
    for r in 0..shapes.k() {
        let row = &mut out[r * width..(r + 1) * width];
        for p in 0..shapes.d() {
            let wf = shapes.waveform(r, p);
            let sigp = sig.electrode(p);
            for (i, j) in window.clone().enumerate() {
                let span = t.min(n - j);
                let seg = &sigp[j..j + span];
                let mut acc = 0.0;
                for (x, w) in seg.iter().zip(&wf[..span]) {
                    acc += x * w;
                }
                row[i] += acc;
            }
        }
    }
    Ok(out)
}

/// Gram entry `<H_(r1,j1), H_(r2,j2)>` for interior columns: the waveform
/// cross-correlation at lag `j1 - j2`, summed over electrodes. Zero whenever
/// `|j1 - j2| >= t`. Does not account for right-edge clipping; subproblem
/// construction uses [`gram_entry_clipped`] for that.
pub fn gram_entry(shapes: &ShapeBank, r1: usize, j1: usize, r2: usize, j2: usize) -> f64 {
    let t = shapes.t();
    let lag = j1.abs_diff(j2);
    if lag >= t {
        return 0.0;
    }
    // <H_(r1,j1), H_(r2,j2)> only depends on the lag; orient so that the
    // later column's waveform is read from offset `lag`.
    let (ra, rb) = if j1 <= j2 { (r1, r2) } else { (r2, r1) };
    let mut acc = 0.0;
    for p in 0..shapes.d() {
        let wa = shapes.waveform(ra, p);
        let wb = shapes.waveform(rb, p);
        for tau in 0..t - lag {
            acc += wa[lag + tau] * wb[tau];
        }
    }
    acc
}

/// Precomputed interior Gram entries, indexed by neuron pair and lag.
/// Dense active sets rebuild block Grams constantly; a lookup table turns
/// each entry into O(1) (edge-clipped columns still compute directly).
pub(crate) struct GramTable {
    k: usize,
    t: usize,
    table: Vec<f64>,
}

impl GramTable {
    pub(crate) fn build(shapes: &ShapeBank) -> GramTable {
        let k = shapes.k();
        let t = shapes.t();
        let width = 2 * t - 1;
        let mut table = vec![0.0; k * k * width];
        for r1 in 0..k {
            for r2 in 0..k {
                for (idx, lag) in (-(t as isize - 1)..t as isize).enumerate() {
                    // lag = j1 - j2; place j2 at t-1 so both columns are interior
                    let j2 = (t - 1) as isize;
                    let j1 = j2 + lag;
                    table[(r1 * k + r2) * width + idx] =
                        gram_entry(shapes, r1, j1 as usize, r2, j2 as usize);
                }
            }
        }
        GramTable { k, t, table }
    }

    #[inline]
    pub(crate) fn entry(
        &self,
        shapes: &ShapeBank,
        n: usize,
        r1: usize,
        j1: usize,
        r2: usize,
        j2: usize,
    ) -> f64 {
        let t = self.t;
        if j1 + t <= n && j2 + t <= n {
            let lag = j1 as isize - j2 as isize;
            if lag.unsigned_abs() >= t {
                return 0.0;
            }
            let idx = (lag + t as isize - 1) as usize;
            self.table[(r1 * self.k + r2) * (2 * t - 1) + idx]
        } else {
            gram_entry_clipped(shapes, n, r1, j1, r2, j2)
        }
    }
}

/// Gram entry between possibly edge-clipped columns of a length-`n` signal.
pub(crate) fn gram_entry_clipped(
    shapes: &ShapeBank,
    n: usize,
    r1: usize,
    j1: usize,
    r2: usize,
    j2: usize,
) -> f64 {
    let t = shapes.t();
    if j1 + t <= n && j2 + t <= n {
        return gram_entry(shapes, r1, j1, r2, j2);
    }
    let lag = j1.abs_diff(j2);
    if lag >= t {
        return 0.0;
    }
    let ((ra, ja), (rb, jb)) = if j1 <= j2 {
        ((r1, j1), (r2, j2))
    } else {
        ((r2, j2), (r1, j1))
    };
    // Overlap of [ja, ja+t) and [jb, jb+t), clipped to the signal.
    let hi = n.min(ja + t).min(jb + t);
    if hi <= jb {
        return 0.0;
    }
    let mut acc = 0.0;
    for p in 0..shapes.d() {
        let wa = shapes.waveform(ra, p);
        let wb = shapes.waveform(rb, p);
        for j in jb..hi {
            acc += wa[j - ja] * wb[j - jb];
        }
    }
    acc
}

/// Smallest regularization at which the all-zero vector is optimal: the
/// maximum absolute correlation of any dictionary column with `y`.
pub fn lambda_max(shapes: &ShapeBank, y: &MultiSignal) -> Result<f64> {
    let g = correlate(shapes, y, 0..y.n())?;
    Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Applies `H^T H` to a dense coefficient vector of length `k * n`.
fn normal_apply(shapes: &ShapeBank, v: &[f64], n: usize, scratch: &mut MultiSignal) -> Vec<f64> {
    scratch.raw_mut().fill(0.0);
    for r in 0..shapes.k() {
        for j in 0..n {
            let c = v[r * n + j];
            if c != 0.0 {
                accumulate_column(scratch, shapes, r, j, c);
            }
        }
    }
    correlate(shapes, scratch, 0..n).expect("dimensions fixed by caller")
}

/// Gershgorin row-sum bound on the largest eigenvalue of `H^T H`: every Gram
/// entry at a given lag is bounded by the absolute-value cross-correlation of
/// the waveforms at that lag, clipped or not.
fn gershgorin_bound(shapes: &ShapeBank) -> f64 {
    let t = shapes.t();
    let mut worst = 0.0_f64;
    for r in 0..shapes.k() {
        let mut row_sum = 0.0;
        for r2 in 0..shapes.k() {
            for lag in -(t as isize - 1)..t as isize {
                let mut acc = 0.0;
                for p in 0..shapes.d() {
                    let wa = shapes.waveform(r, p);
                    let wb = shapes.waveform(r2, p);
                    for tau in 0..t {
                        let shifted = tau as isize + lag;
                        if (0..t as isize).contains(&shifted) {
                            acc += wa[shifted as usize].abs() * wb[tau].abs();
                        }
                    }
                }
                row_sum += acc;
            }
        }
        worst = worst.max(row_sum);
    }
    worst
}

/// Upper bound on the largest eigenvalue of `H^T H`, via power iteration on
/// the forward/correlate composition with a fixed-seed start vector, then a
/// small safety factor. If the iteration has not settled after the cap, a
/// conservative multiple is used instead; either way the result is capped by
/// the exact Gershgorin bound, which dominates near degenerate spectra where
/// power iteration stalls.
pub fn lipschitz_bound(shapes: &ShapeBank, n: usize) -> Result<f64> {
    if n < shapes.t() {
        return Err(Error::arg(format!(
            "n={n} must be at least the shape length t={}",
            shapes.t()
        )));
    }
    let kn = shapes.k() * n;
    let cap = gershgorin_bound(shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(POWER_SEED, Stream::Internal, n as u64));
    let mut v: Vec<f64> = (0..kn).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut scratch = MultiSignal::zeros(shapes.d(), n)?;
    let mut estimate = 0.0_f64;
    for _ in 0..POWER_MAX_ITER {
        let w = normal_apply(shapes, &v, n, &mut scratch);
        let new_norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if new_norm == 0.0 {
            // v landed in the null space; H^T H has eigenvalue 0 there but
            // the bank has nonzero shapes, so just restart with a new vector.
            v = (0..kn).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            continue;
        }
        let prev = estimate;
        estimate = new_norm;
        v = w;
        v.iter_mut().for_each(|x| *x /= new_norm);
        if (estimate - prev).abs() <= POWER_TOL * estimate {
            return Ok((estimate * POWER_SAFETY).min(cap));
        }
    }
    Ok((estimate * 1.5).min(cap))
}
