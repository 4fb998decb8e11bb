//! Sparsity, neuron-removal, FLOP, and accuracy accounting.
//!
//! "Zero" always means bitwise zero: the proximal operators produce exact
//! zeros, so no tolerance is applied. Biases are never counted.
//!
//! FLOP model: every multiply-accumulate between a live input and a live
//! output through a nonzero weight costs 2 operations, for dense layers
//! and for each output position of a convolution. Activations are free.
//! A unit is live unless it has been removed (see
//! [`count_removed_neurons`]); network inputs and outputs are always live.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, NetworkModel};

/// Summary of a model's sparsity and accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub nonzero_fraction: f64,
    pub neurons_total: usize,
    pub neurons_removed: usize,
    pub flop_ratio: f64,
    pub accuracy: f64,
}

impl SparsityReport {
    pub fn compute(model: &NetworkModel, dataset: &Dataset) -> Result<Self> {
        let nz = count_nonzero(model);
        let removed = count_removed_neurons(model);
        Ok(SparsityReport {
            nonzero_fraction: nz.fraction(),
            neurons_total: removed.total_units,
            neurons_removed: removed.total,
            flop_ratio: flop_ratio(model),
            accuracy: accuracy(model, dataset)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonzeroCount {
    pub nonzero: usize,
    pub total: usize,
}

impl NonzeroCount {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.nonzero as f64 / self.total as f64
        }
    }
}

/// Nonzero regularized weights across all layers.
pub fn count_nonzero(model: &NetworkModel) -> NonzeroCount {
    let (nonzero, total) = model.layers().iter().fold((0, 0), |(nz, t), l| {
        (nz + l.weights.count_nonzero(), t + l.weights.len())
    });
    NonzeroCount { nonzero, total }
}

/// Removed hidden units, per hidden layer (every layer but the last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovedNeurons {
    pub per_layer: Vec<usize>,
    pub total: usize,
    /// Hidden units (dense outputs and conv filters) in the network.
    pub total_units: usize,
}

fn all_zero<'a>(mut values: impl Iterator<Item = &'a f64>) -> bool {
    values.all(|v| *v == 0.0)
}

/// Whether every weight of `next` that reads unit `unit` of the previous
/// layer is zero.
fn outgoing_is_zero(prev: &LayerSpec, next: &crate::nn::Layer, unit: usize) -> bool {
    let w = next.weights.as_array();
    match (prev, &next.spec) {
        (LayerSpec::Dense { .. }, LayerSpec::Dense { .. }) => all_zero(w.row(unit).iter()),
        (LayerSpec::Conv2d { filters, .. }, LayerSpec::Dense { .. }) => {
            (unit..w.nrows()).step_by(*filters).all(|r| all_zero(w.row(r).iter()))
        }
        (LayerSpec::Conv2d { .. }, LayerSpec::Conv2d { in_channels, .. }) => w
            .outer_iter()
            .all(|row| (unit..row.len()).step_by(*in_channels).all(|t| row[t] == 0.0)),
        (LayerSpec::Dense { .. }, LayerSpec::Conv2d { .. }) => false,
    }
}

/// Liveness of each unit produced by each layer.
fn unit_liveness(model: &NetworkModel) -> Vec<Vec<bool>> {
    let layers = model.layers();
    let last = layers.len() - 1;
    layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let units = layer.spec.units();
            if l == last {
                return vec![true; units];
            }
            let w = layer.weights.as_array();
            (0..units)
                .map(|u| match layer.spec {
                    // a filter is removed once all its taps are zero
                    LayerSpec::Conv2d { .. } => !all_zero(w.row(u).iter()),
                    LayerSpec::Dense { .. } => {
                        let incoming_zero = all_zero(w.column(u).iter());
                        let outgoing_zero = outgoing_is_zero(&layer.spec, &layers[l + 1], u);
                        !(incoming_zero || outgoing_zero)
                    }
                })
                .collect()
        })
        .collect()
}

/// A hidden dense unit is removed when its whole incoming column or its
/// whole outgoing row is zero; a filter is removed when all of its weights
/// are zero. Input and output units are never counted.
pub fn count_removed_neurons(model: &NetworkModel) -> RemovedNeurons {
    let live = unit_liveness(model);
    let hidden = &live[..live.len() - 1];
    let per_layer: Vec<usize> = hidden.iter().map(|l| l.iter().filter(|a| !**a).count()).collect();
    RemovedNeurons {
        total: per_layer.iter().sum(),
        total_units: hidden.iter().map(Vec::len).sum(),
        per_layer,
    }
}

/// `(sparse, dense)` forward FLOP counts.
pub fn flop_counts(model: &NetworkModel) -> (u64, u64) {
    let live = unit_liveness(model);
    let mut sparse = 0u64;
    let mut dense = 0u64;
    for (l, layer) in model.layers().iter().enumerate() {
        let out_live = &live[l];
        let w = layer.weights.as_array();
        match layer.spec {
            LayerSpec::Dense { fan_in, fan_out, .. } => {
                let in_live: Vec<bool> = if l == 0 {
                    vec![true; fan_in]
                } else {
                    let prev = &live[l - 1];
                    match model.layers()[l - 1].spec {
                        // flattened conv output: filter index fastest
                        LayerSpec::Conv2d { filters, .. } => (0..fan_in).map(|i| prev[i % filters]).collect(),
                        LayerSpec::Dense { .. } => prev.clone(),
                    }
                };
                dense += 2 * (fan_in * fan_out) as u64;
                for (i, row) in w.outer_iter().enumerate() {
                    if !in_live[i] {
                        continue;
                    }
                    sparse += 2 * row
                        .iter()
                        .zip(out_live)
                        .filter(|(v, alive)| **v != 0.0 && **alive)
                        .count() as u64;
                }
            }
            LayerSpec::Conv2d { in_channels, .. } => {
                let (oh, ow) = layer.spec.conv_output_hw().expect("validated conv");
                let positions = (oh * ow) as u64;
                let in_live: Vec<bool> = if l == 0 {
                    vec![true; in_channels]
                } else {
                    live[l - 1].clone()
                };
                dense += 2 * positions * w.len() as u64;
                for (f, row) in w.outer_iter().enumerate() {
                    if !out_live[f] {
                        continue;
                    }
                    let taps = row
                        .iter()
                        .enumerate()
                        .filter(|(t, v)| **v != 0.0 && in_live[t % in_channels])
                        .count() as u64;
                    sparse += 2 * positions * taps;
                }
            }
        }
    }
    (sparse, dense)
}

/// Sparse over dense forward FLOPs; 1 for a dense model, 0 for a zero one.
pub fn flop_ratio(model: &NetworkModel) -> f64 {
    let (sparse, dense) = flop_counts(model);
    if dense == 0 {
        0.0
    } else {
        sparse as f64 / dense as f64
    }
}

/// Index of the largest entry, ties to the smallest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Fraction of samples whose most probable class equals the label.
pub fn accuracy(model: &NetworkModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("accuracy of an empty dataset".into()));
    }
    let probs = model.predict(dataset.features.view())?;
    let correct = probs
        .outer_iter()
        .zip(&dataset.labels)
        .filter(|(p, &label)| argmax(p.iter().copied()) == label)
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}
