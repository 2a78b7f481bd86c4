//! Dense multi-electrode signals: observations, noise, and residuals.

use crate::error::{Error, Result};

/// A dense `d x n` sample array, stored electrode-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSignal {
    d: usize,
    n: usize,
    samples: Vec<f64>,
}

impl MultiSignal {
    /// An all-zero signal.
    pub fn zeros(d: usize, n: usize) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::arg(format!(
                "signal dimensions must be positive (d={d}, n={n})"
            )));
        }
        Ok(MultiSignal {
            d,
            n,
            samples: vec![0.0; d * n],
        })
    }

    /// Wraps an electrode-major buffer, validating length and finiteness.
    pub fn from_samples(d: usize, n: usize, samples: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::arg(format!(
                "signal dimensions must be positive (d={d}, n={n})"
            )));
        }
        if samples.len() != d * n {
            return Err(Error::dim(format!(
                "sample buffer has {} values, expected d*n = {}",
                samples.len(),
                d * n
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample at offset {pos}")));
        }
        Ok(MultiSignal { d, n, samples })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn electrode(&self, p: usize) -> &[f64] {
        debug_assert!(p < self.d);
        &self.samples[p * self.n..(p + 1) * self.n]
    }

    #[inline]
    pub fn electrode_mut(&mut self, p: usize) -> &mut [f64] {
        debug_assert!(p < self.d);
        &mut self.samples[p * self.n..(p + 1) * self.n]
    }

    pub fn raw(&self) -> &[f64] {
        &self.samples
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    /// Squared Frobenius norm over all electrodes and samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Max absolute difference against another signal of the same shape.
    pub fn max_abs_diff(&self, other: &MultiSignal) -> f64 {
        assert_eq!(self.d, other.d);
        assert_eq!(self.n, other.n);
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
