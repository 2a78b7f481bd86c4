//! Recovery scores: tolerance-matched F1 and the smoothed train-comparison
//! score CP(x, y) = 1 - ||K*(x-y)||_1 / (||x||_1 + ||y||_1) with a
//! normalized rectangular kernel K.

use crate::activation::ActivationSet;
use crate::error::{Error, Result};
use serde::Serialize;

/// Matching rule for F1: an estimated spike matches an unmatched true spike
/// of the same neuron within `tol` samples (greedy, nearest-first, one-to-one,
/// scanned in increasing time).
#[derive(Debug, Clone, Copy)]
pub struct MatchConfig {
    pub tol: usize,
    pub require_same_neuron: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            tol: 0,
            require_same_neuron: true,
        }
    }
}

/// Precision / recall / F1 triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Kernel for the CP score.
#[derive(Debug, Clone, Copy)]
pub struct CpConfig {
    /// Support of the rectangular kernel, in samples; must be odd.
    pub kernel_width: usize,
    /// Replace amplitudes by 1 before comparing.
    pub binarize: bool,
}

impl CpConfig {
    pub fn new(kernel_width: usize) -> Result<Self> {
        if kernel_width == 0 || kernel_width % 2 == 0 {
            return Err(Error::arg(format!(
                "kernel width must be odd and positive, got {kernel_width}"
            )));
        }
        Ok(CpConfig {
            kernel_width,
            binarize: false,
        })
    }

    /// Default width for shapes of length `t`: about half a shape, odd.
    pub fn for_shape_length(t: usize) -> CpConfig {
        let half = (t / 2).max(1);
        CpConfig {
            kernel_width: if half % 2 == 0 { half + 1 } else { half },
            binarize: false,
        }
    }
}

/// CP value plus a flag for the degenerate both-empty case.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CpScore {
    pub value: f64,
    pub both_empty: bool,
}

/// Greedy tolerance-matched F1. Amplitudes are ignored; only positions (and
/// neuron identities, unless disabled) matter.
///
/// Conventions for empty sides: precision is 1 when nothing was estimated,
/// recall is 1 when there was nothing to find, and f1 is 0 when
/// precision + recall is 0.
pub fn f1_score(truth: &ActivationSet, est: &ActivationSet, cfg: &MatchConfig) -> Result<F1Score> {
    check_same_grid(truth, est)?;
    let matched = if cfg.require_same_neuron {
        (0..truth.k())
            .map(|r| {
                greedy_matches(
                    &truth
                        .neuron_entries(r)
                        .map(|a| a.sample)
                        .collect::<Vec<_>>(),
                    &est.neuron_entries(r).map(|a| a.sample).collect::<Vec<_>>(),
                    cfg.tol,
                )
            })
            .sum::<usize>()
    } else {
        greedy_matches(
            &truth.iter().map(|a| a.sample).collect::<Vec<_>>(),
            &est.iter().map(|a| a.sample).collect::<Vec<_>>(),
            cfg.tol,
        )
    };
    let precision = if est.is_empty() {
        1.0
    } else {
        matched as f64 / est.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        matched as f64 / truth.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
    })
}

/// Greedy one-to-one matching: walk estimated spikes in increasing time and
/// give each the nearest unmatched true spike within `tol` (earlier spike on
/// distance ties). Both inputs must be sorted.
fn greedy_matches(truth: &[usize], est: &[usize], tol: usize) -> usize {
    let mut taken = vec![false; truth.len()];
    let mut matches = 0;
    for &e in est {
        let lo = e.saturating_sub(tol);
        let hi = e + tol;
        let start = truth.partition_point(|&s| s < lo);
        let mut best: Option<(usize, usize)> = None; // (distance, index)
        for (i, &s) in truth.iter().enumerate().skip(start) {
            if s > hi {
                break;
            }
            if taken[i] {
                continue;
            }
            let dist = s.abs_diff(e);
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, i));
            }
        }
        if let Some((_, i)) = best {
            taken[i] = true;
            matches += 1;
        }
    }
    matches
}

/// CP score between two activation sets, comparing per-neuron amplitude
/// trains smoothed by a normalized rectangular kernel (full convolution, so
/// no mass is lost at the signal edges).
pub fn cp_score(truth: &ActivationSet, est: &ActivationSet, cfg: &CpConfig) -> Result<CpScore> {
    if cfg.kernel_width == 0 || cfg.kernel_width % 2 == 0 {
        return Err(Error::arg(format!(
            "kernel width must be odd and positive, got {}",
            cfg.kernel_width
        )));
    }
    check_same_grid(truth, est)?;
    if truth.is_empty() && est.is_empty() {
        return Ok(CpScore {
            value: 1.0,
            both_empty: true,
        });
    }
    let n = truth.n();
    let width = cfg.kernel_width;
    let weight = 1.0 / width as f64;
    let mut smoothed_l1 = 0.0;
    let mut mass = 0.0;
    let mut diff = vec![0.0_f64; n];
    for r in 0..truth.k() {
        diff.fill(0.0);
        for a in truth.neuron_entries(r) {
            let amp = if cfg.binarize { 1.0 } else { a.amplitude };
            diff[a.sample] += amp;
            mass += amp.abs();
        }
        for a in est.neuron_entries(r) {
            let amp = if cfg.binarize { 1.0 } else { a.amplitude };
            diff[a.sample] -= amp;
            mass += amp.abs();
        }
        // ||K * diff||_1 over the full convolution support n + width - 1.
        let mut window_sum = 0.0;
        for out in 0..n + width - 1 {
            // kernel taps cover diff[out - width + 1 ..= out]
            if out < n {
                window_sum += diff[out];
            }
            if out >= width {
                window_sum -= diff[out - width];
            }
            smoothed_l1 += (weight * window_sum).abs();
        }
    }
    Ok(CpScore {
        value: 1.0 - smoothed_l1 / mass,
        both_empty: false,
    })
}

fn check_same_grid(truth: &ActivationSet, est: &ActivationSet) -> Result<()> {
    if truth.k() != est.k() || truth.n() != est.n() {
        return Err(Error::dim(format!(
            "activation sets disagree: truth k={} n={}, estimate k={} n={}",
            truth.k(),
            truth.n(),
            est.k(),
            est.n()
        )));
    }
    Ok(())
}
