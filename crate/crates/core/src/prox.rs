//! Proximal operators: transformed L1 (closed form), group sparsity, L1,
//! and the sequential composition used by the integrated regularizer.
//!
//! The scalar TL1 prox solves
//!
//! ```text
//! argmin_y  (y - w)^2 / (2 beta) + (a + 1)|y| / (a + |y|)
//! ```
//!
//! exactly. Inputs with `|w| <= t(beta, a)` map to zero; above the threshold
//! the nonzero stationary point is the root of a depressed cubic, given by
//! the trigonometric formula in [`tl1_prox_scalar`].

use ndarray::{Array2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::WeightMatrix;

/// Slack allowed on the arccos argument before the closed form is declared
/// out of range.
pub const ARCCOS_TOLERANCE: f64 = 1e-9;

/// Step parameters of the TL1 prox: the scaled weight `beta` (for example
/// `lambda * gamma * mu_l`) and the TL1 shape `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxStep {
    pub beta: f64,
    pub a: f64,
}

impl ProxStep {
    pub fn new(beta: f64, a: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Domain(format!("prox beta must be nonnegative, got {beta}")));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Domain(format!("TL1 shape a must be positive, got {a}")));
        }
        Ok(ProxStep { beta, a })
    }

    fn check(&self) -> Result<()> {
        ProxStep::new(self.beta, self.a).map(|_| ())
    }
}

/// Zero threshold `t` of the TL1 prox:
/// `beta (a + 1) / a` while `beta <= a^2 / (2 (a + 1))`, otherwise
/// `sqrt(2 beta (a + 1)) - a / 2`. Returns 0 when `beta == 0`.
pub fn tl1_threshold(step: ProxStep) -> f64 {
    let ProxStep { beta, a } = step;
    if beta <= 0.0 {
        return 0.0;
    }
    if beta <= a * a / (2.0 * (a + 1.0)) {
        beta * (a + 1.0) / a
    } else {
        (2.0 * beta * (a + 1.0)).sqrt() - a / 2.0
    }
}

/// Closed-form TL1 prox of a single value.
///
/// For `|w| > t` the result is
/// `sgn(w) * (2/3 (a + |w|) cos(phi / 3) - 2a/3 + |w|/3)` with
/// `phi = arccos(1 - 27 beta a (a + 1) / (2 (a + |w|)^3))`.
pub fn tl1_prox_scalar(w: f64, step: ProxStep) -> Result<f64> {
    step.check()?;
    if !w.is_finite() {
        return Err(Error::Domain(format!("prox argument must be finite, got {w}")));
    }
    tl1_prox_unchecked(w, step)
}

fn tl1_prox_unchecked(w: f64, step: ProxStep) -> Result<f64> {
    if step.beta == 0.0 {
        return Ok(w);
    }
    tl1_prox_above(w, step, tl1_threshold(step))
}

fn tl1_prox_above(w: f64, step: ProxStep, threshold: f64) -> Result<f64> {
    let ProxStep { beta, a } = step;
    let aw = w.abs();
    if aw <= threshold {
        return Ok(0.0);
    }
    let s = a + aw;
    // arccos argument is 1 - x; valid while x lies in [0, 2]
    let x = 27.0 * beta * a * (a + 1.0) / (2.0 * s * s * s);
    if !(-ARCCOS_TOLERANCE..=2.0 + ARCCOS_TOLERANCE).contains(&x) {
        return Err(Error::Prox {
            w,
            beta,
            a,
            reason: format!("arccos argument {} outside [-1, 1]", 1.0 - x),
        });
    }
    let x = x.clamp(0.0, 2.0);
    // arccos(1 - x) = 2 asin(sqrt(x / 2)), which keeps precision for tiny x
    let phi = 2.0 * (x / 2.0).sqrt().asin();
    // 2/3 s cos(phi/3) - 2a/3 + |w|/3 rewritten with cos = 1 - 2 sin^2(phi/6)
    let half = (phi / 6.0).sin();
    let g = aw - 4.0 / 3.0 * s * half * half;
    Ok(g.clamp(0.0, aw).copysign(w))
}

fn tl1_prox_view(mut values: ArrayViewMut2<'_, f64>, step: ProxStep) -> Result<()> {
    if step.beta == 0.0 {
        return Ok(());
    }
    let threshold = tl1_threshold(step);
    let apply = |v: &mut f64, row: usize, col: usize| -> Result<()> {
        if *v == 0.0 {
            return Ok(());
        }
        let at = |e: Error| Error::ProxAt {
            row,
            col,
            source: Box::new(e),
        };
        if !v.is_finite() {
            return Err(at(Error::Domain(format!("non-finite weight {v}"))));
        }
        *v = tl1_prox_above(*v, step, threshold).map_err(at)?;
        Ok(())
    };
    let cols = values.ncols();
    match values.as_slice_mut() {
        Some(flat) => {
            for (k, v) in flat.iter_mut().enumerate() {
                apply(v, k / cols, k % cols)?;
            }
        }
        None => {
            for ((i, j), v) in values.indexed_iter_mut() {
                apply(v, i, j)?;
            }
        }
    }
    Ok(())
}

/// Elementwise TL1 prox.
pub fn tl1_prox_matrix(w: &WeightMatrix, step: ProxStep) -> Result<WeightMatrix> {
    step.check()?;
    let mut out = w.clone();
    tl1_prox_view(out.view_mut(), step)?;
    Ok(out)
}

/// Elementwise TL1 prox applied in place.
pub fn tl1_prox_in_place(w: &mut WeightMatrix, step: ProxStep) -> Result<()> {
    step.check()?;
    tl1_prox_view(w.view_mut(), step)
}

/// How a layer's weights are divided into groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupScheme {
    /// One group per row of an input x output dense matrix: the outgoing
    /// connections of one input neuron.
    DenseRowGroups,
    /// One group per filter of a convolutional layer.
    ConvFilterGroups,
    /// Arbitrary user-supplied index sets.
    Custom,
}

/// Disjoint, nonempty groups of entries covering a weight matrix exactly
/// once. Entries are flat row-major indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    shape: (usize, usize),
    groups: Vec<Vec<usize>>,
    scheme: GroupScheme,
}

impl GroupPartition {
    /// Checks disjointness, coverage, and non-emptiness.
    pub fn new(shape: (usize, usize), groups: Vec<Vec<usize>>, scheme: GroupScheme) -> Result<Self> {
        let total = shape.0 * shape.1;
        let mut seen = vec![false; total];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Partition(format!("group {g} is empty")));
            }
            for &idx in group {
                if idx >= total {
                    return Err(Error::Partition(format!(
                        "group {g} references entry {idx} outside a {}x{} matrix",
                        shape.0, shape.1
                    )));
                }
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(Error::Partition(format!("entry {idx} appears in more than one group")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("entry {missing} is not covered by any group")));
        }
        Ok(GroupPartition { shape, groups, scheme })
    }

    /// One group per matrix row.
    pub fn by_rows(rows: usize, cols: usize, scheme: GroupScheme) -> Self {
        let groups = (0..rows).map(|r| (r * cols..(r + 1) * cols).collect()).collect();
        GroupPartition {
            shape: (rows, cols),
            groups,
            scheme,
        }
    }

    pub fn dense_rows(rows: usize, cols: usize) -> Self {
        Self::by_rows(rows, cols, GroupScheme::DenseRowGroups)
    }

    pub fn conv_filters(filters: usize, taps: usize) -> Self {
        Self::by_rows(filters, taps, GroupScheme::ConvFilterGroups)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn scheme(&self) -> GroupScheme {
        self.scheme
    }

    fn is_row_partition(&self) -> bool {
        matches!(self.scheme, GroupScheme::DenseRowGroups | GroupScheme::ConvFilterGroups)
    }
}

fn shrink_factor(norm: f64, beta: f64) -> f64 {
    if norm <= beta || norm == 0.0 {
        0.0
    } else {
        1.0 - beta / norm
    }
}

fn group_prox_array(w: &mut Array2<f64>, partition: &GroupPartition, beta: f64) -> Result<()> {
    if partition.shape != w.dim() {
        return Err(Error::Partition(format!(
            "partition built for {:?} applied to a {:?} matrix",
            partition.shape,
            w.dim()
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Domain(format!(
            "group prox beta must be nonnegative, got {beta}"
        )));
    }
    if beta == 0.0 {
        return Ok(());
    }
    if partition.is_row_partition() {
        for mut row in w.axis_iter_mut(Axis(0)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = shrink_factor(norm, beta);
            if scale == 0.0 {
                row.fill(0.0);
            } else {
                row.mapv_inplace(|v| v * scale);
            }
        }
        return Ok(());
    }
    let flat = w
        .as_slice_mut()
        .ok_or_else(|| Error::Partition("weight matrix is not contiguous".into()))?;
    for group in &partition.groups {
        let norm = group.iter().map(|&i| flat[i] * flat[i]).sum::<f64>().sqrt();
        let scale = shrink_factor(norm, beta);
        for &i in group {
            flat[i] = if scale == 0.0 { 0.0 } else { flat[i] * scale };
        }
    }
    Ok(())
}

/// Group-sparsity prox: each group is scaled by
/// `max(0, 1 - beta_group / ||W_g||_2)`. Groups whose norm does not exceed
/// `beta_group` become exactly zero.
pub fn group_prox(w: &WeightMatrix, partition: &GroupPartition, beta_group: f64) -> Result<WeightMatrix> {
    let mut out = w.clone();
    group_prox_in_place(&mut out, partition, beta_group)?;
    Ok(out)
}

pub fn group_prox_in_place(w: &mut WeightMatrix, partition: &GroupPartition, beta_group: f64) -> Result<()> {
    group_prox_array(w.as_array_mut(), partition, beta_group)
}

#[inline]
pub fn soft_threshold(w: f64, beta: f64) -> f64 {
    let m = w.abs() - beta;
    if m > 0.0 {
        m.copysign(w)
    } else {
        0.0
    }
}

/// Elementwise soft thresholding, the L1 prox.
pub fn l1_prox(w: &WeightMatrix, beta: f64) -> WeightMatrix {
    let mut out = w.clone();
    l1_prox_in_place(&mut out, beta);
    out
}

pub fn l1_prox_in_place(w: &mut WeightMatrix, beta: f64) {
    if beta > 0.0 {
        w.as_array_mut().mapv_inplace(|v| soft_threshold(v, beta));
    }
}

fn check_integrated(lambda: f64, gamma: f64, mu_l: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Domain(format!("learning rate must be nonnegative, got {gamma}")));
    }
    if !(0.0..=1.0).contains(&mu_l) {
        return Err(Error::Domain(format!("mu_l must lie in [0, 1], got {mu_l}")));
    }
    Ok(())
}

/// Prox of the integrated regularizer, computed as TL1 prox with
/// `beta = lambda * gamma * mu_l` followed by the group prox with
/// `beta = lambda * gamma * (1 - mu_l)`.
pub fn integrated_prox(
    w: &WeightMatrix,
    partition: &GroupPartition,
    lambda: f64,
    gamma: f64,
    mu_l: f64,
    a: f64,
) -> Result<WeightMatrix> {
    let mut out = w.clone();
    integrated_prox_in_place(&mut out, partition, lambda, gamma, mu_l, a)?;
    Ok(out)
}

pub fn integrated_prox_in_place(
    w: &mut WeightMatrix,
    partition: &GroupPartition,
    lambda: f64,
    gamma: f64,
    mu_l: f64,
    a: f64,
) -> Result<()> {
    check_integrated(lambda, gamma, mu_l)?;
    let step = ProxStep::new(lambda * gamma * mu_l, a)?;
    tl1_prox_in_place(w, step)?;
    group_prox_in_place(w, partition, lambda * gamma * (1.0 - mu_l))
}
