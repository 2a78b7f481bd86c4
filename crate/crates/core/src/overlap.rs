//! Overlap-group statistics and the theoretical mean-size bound.
//!
//! An overlap is a maximal chain of activations (pooled over neurons) whose
//! consecutive sample gaps are at most `t`. Group size is what bounds the
//! dimension of the solver's subproblems, so its distribution is what makes
//! the group and windowed strategies cheap.

use crate::activation::ActivationSet;
use serde::Serialize;
use std::collections::BTreeMap;

/// Summary of an overlap partition.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapStats {
    pub group_count: usize,
    pub mean_size: f64,
    pub max_size: usize,
    /// size -> number of groups of that size
    pub size_histogram: BTreeMap<usize, usize>,
}

impl OverlapStats {
    fn from_sizes(sizes: impl Iterator<Item = usize>) -> OverlapStats {
        let mut histogram = BTreeMap::new();
        let mut count = 0usize;
        let mut total = 0usize;
        let mut max = 0usize;
        for s in sizes {
            *histogram.entry(s).or_insert(0) += 1;
            count += 1;
            total += s;
            max = max.max(s);
        }
        OverlapStats {
            group_count: count,
            mean_size: if count == 0 {
                0.0
            } else {
                total as f64 / count as f64
            },
            max_size: max,
            size_histogram: histogram,
        }
    }
}

/// Theoretical bound on the mean overlap size for pooled Poisson trains of
/// total intensity `mu_total` (events per sample) and shape length `t`:
/// `mu t e^(mu t)`.
pub fn overlap_bound(mu_total: f64, t: usize) -> f64 {
    let x = mu_total * t as f64;
    x * x.exp()
}

/// Partitions the pooled activations into maximal chains with consecutive
/// gaps at most `t` and summarizes the sizes. Single left-to-right pass.
pub fn empirical_overlaps(acts: &ActivationSet, t: usize) -> OverlapStats {
    OverlapStats::from_sizes(chain_sizes(acts.iter().map(|a| a.sample), t).into_iter())
}

/// Like [`empirical_overlaps`] but per neuron: each neuron's own train is
/// partitioned separately. The theoretical bound applies to the pooled
/// process; these are descriptive.
pub fn per_neuron_overlaps(acts: &ActivationSet, t: usize) -> Vec<OverlapStats> {
    (0..acts.k())
        .map(|r| {
            OverlapStats::from_sizes(
                chain_sizes(acts.neuron_entries(r).map(|a| a.sample), t).into_iter(),
            )
        })
        .collect()
}

/// Chain sizes of an already-sorted sample sequence.
fn chain_sizes(samples: impl Iterator<Item = usize>, t: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut current = 0usize;
    let mut last: Option<usize> = None;
    for j in samples {
        match last {
            Some(prev) if j - prev <= t => current += 1,
            Some(_) => {
                sizes.push(current);
                current = 1;
            }
            None => current = 1,
        }
        last = Some(j);
    }
    if current > 0 {
        sizes.push(current);
    }
    sizes
}
