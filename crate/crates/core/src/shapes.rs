//! The shape bank: known per-neuron waveforms on every electrode.
//!
//! A `ShapeBank` is the implicit definition of the block-Toeplitz dictionary:
//! column `(r, j)` of the dictionary is neuron `r`'s waveform placed at sample
//! `j`. The dictionary is never materialized; all operator arithmetic lives in
//! [`crate::operator`].

use crate::error::{Error, Result};

/// Known waveforms for `k` neurons on `d` electrodes, each `t` samples long.
///
/// Storage is a flat array in `(neuron, electrode, lag)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBank {
    k: usize,
    d: usize,
    t: usize,
    waveforms: Vec<f64>,
}

impl ShapeBank {
    /// Builds a shape bank from a flat `(neuron, electrode, lag)`-ordered array.
    ///
    /// Rejects empty dimensions, non-finite values, and any neuron whose
    /// waveform is identically zero on all electrodes (its activations would
    /// be unidentifiable).
    pub fn new(k: usize, d: usize, t: usize, waveforms: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 || t == 0 {
            return Err(Error::arg(format!(
                "shape bank dimensions must be positive (k={k}, d={d}, t={t})"
            )));
        }
        if waveforms.len() != k * d * t {
            return Err(Error::dim(format!(
                "waveform buffer has {} values, expected k*d*t = {}",
                waveforms.len(),
                k * d * t
            )));
        }
        if let Some(pos) = waveforms.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("waveform value at offset {pos}")));
        }
        let bank = ShapeBank { k, d, t, waveforms };
        for r in 0..k {
            if (0..d).all(|p| bank.waveform(r, p).iter().all(|&v| v == 0.0)) {
                return Err(Error::DegenerateShape(format!(
                    "neuron {r} has an all-zero waveform"
                )));
            }
        }
        Ok(bank)
    }

    /// Convenience constructor for a single-neuron, single-electrode bank.
    pub fn single(waveform: &[f64]) -> Result<Self> {
        Self::new(1, 1, waveform.len(), waveform.to_vec())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Waveform of neuron `r` on electrode `p`, as a slice of length `t`.
    #[inline]
    pub fn waveform(&self, r: usize, p: usize) -> &[f64] {
        debug_assert!(r < self.k && p < self.d);
        let base = (r * self.d + p) * self.t;
        &self.waveforms[base..base + self.t]
    }

    /// Raw flat storage in `(neuron, electrode, lag)` order.
    pub fn raw(&self) -> &[f64] {
        &self.waveforms
    }

    /// Squared norm of neuron `r`'s full multi-electrode waveform,
    /// i.e. the diagonal Gram entry of an interior dictionary column.
    pub fn column_energy(&self, r: usize) -> f64 {
        (0..self.d)
            .map(|p| self.waveform(r, p).iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}
