//! Sparse activation trains: which neuron fired when, and how strongly.

use crate::error::{Error, Result};

/// One activation: neuron `neuron` fires at sample `sample` with the given
/// amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub neuron: usize,
    pub sample: usize,
    pub amplitude: f64,
}

/// A sparse set of activations over `k` neurons and `n` samples.
///
/// Entries are kept in canonical order (by sample, then neuron) with at most
/// one entry per `(neuron, sample)` pair; amplitudes are nonzero and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    k: usize,
    n: usize,
    entries: Vec<Activation>,
}

impl ActivationSet {
    pub fn empty(k: usize, n: usize) -> Self {
        ActivationSet {
            k,
            n,
            entries: Vec::new(),
        }
    }

    /// Builds a set from arbitrary-order entries, validating invariants and
    /// sorting into canonical order.
    pub fn new(k: usize, n: usize, mut entries: Vec<Activation>) -> Result<Self> {
        for a in &entries {
            if a.neuron >= k || a.sample >= n {
                return Err(Error::ActivationOutOfRange {
                    neuron: a.neuron,
                    sample: a.sample,
                    k,
                    n,
                });
            }
            if !a.amplitude.is_finite() {
                return Err(Error::NonFinite(format!(
                    "amplitude for neuron {} at sample {}",
                    a.neuron, a.sample
                )));
            }
            if a.amplitude == 0.0 {
                return Err(Error::arg(format!(
                    "zero amplitude for neuron {} at sample {}",
                    a.neuron, a.sample
                )));
            }
        }
        entries.sort_by_key(|a| (a.sample, a.neuron));
        for (row, pair) in entries.windows(2).enumerate() {
            if pair[0].neuron == pair[1].neuron && pair[0].sample == pair[1].sample {
                return Err(Error::DuplicateActivation {
                    neuron: pair[1].neuron,
                    sample: pair[1].sample,
                    row: row + 1,
                });
            }
        }
        Ok(ActivationSet { k, n, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Activation] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &Activation> {
        self.entries.iter()
    }

    /// Entries of a single neuron, in increasing sample order.
    pub fn neuron_entries(&self, r: usize) -> impl Iterator<Item = &Activation> {
        self.entries.iter().filter(move |a| a.neuron == r)
    }

    /// Flat coordinate index `r * n + j` of the vectorized activation vector.
    pub fn flat_index(&self, neuron: usize, sample: usize) -> usize {
        neuron * self.n + sample
    }

    /// Sorted support as `(neuron, sample)` pairs.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|a| (a.neuron, a.sample)).collect()
    }

    /// Total absolute amplitude (the l1 norm of the activation vector).
    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|a| a.amplitude.abs()).sum()
    }
}
