//! Stochastic proximal gradient training.
//!
//! Each iteration draws the next minibatch of a seeded per-epoch
//! permutation and, for every layer `l`, takes a gradient (or Adam) step on
//! the mean minibatch loss and then applies the proximal operator of the
//! selected regularizer. For the integrated regularizer that is the TL1
//! prox with `beta = lambda * gamma * mu_l` followed by the group prox with
//! `beta = lambda * gamma * (1 - mu_l)`, where `mu_l` rises linearly from
//! `s` on the first layer to `1 - s` on the last. Biases only take the
//! gradient step.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::SparsityReport;
use crate::nn::{LayerGradient, LayerSpec, NetworkModel};
use crate::numfmt::sig9;
use crate::prox::{
    group_prox_in_place, integrated_prox_in_place, l1_prox_in_place, tl1_prox_in_place, GroupPartition, ProxStep,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

/// Regularizer applied after each gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerMode {
    /// Plain SGD.
    None,
    /// Weight decay: `lambda * W` added to the gradient, no prox.
    L2,
    /// Soft thresholding with `beta = lambda * gamma`.
    L1,
    /// Group prox with `beta = lambda * gamma`.
    GroupOnly,
    /// TL1 prox with `beta = lambda * gamma`.
    Tl1Only,
    /// Sparse group lasso: L1 prox then group prox, split by `mu_l`.
    Sgl,
    /// TL1 prox then group prox, split by `mu_l`.
    #[default]
    IntegratedTl1,
}

/// Adam moment decay rates and denominator guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Regularization weight.
    pub lambda: f64,
    /// Lowest TL1 share; `mu_l` runs from `s` to `1 - s`.
    pub s: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Cap on minibatch iterations.
    pub max_iterations: usize,
    /// Stop once consecutive epoch-averaged losses differ by less.
    pub loss_delta_tol: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub adam: AdamParams,
    pub regularizer_mode: RegularizerMode,
    /// TL1 shape parameter.
    pub a: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-5,
            s: 0.1,
            learning_rate: 0.1,
            batch_size: 32,
            max_iterations: 1000,
            loss_delta_tol: 1e-5,
            seed: 0,
            optimizer: Optimizer::Sgd,
            adam: AdamParams::default(),
            regularizer_mode: RegularizerMode::IntegratedTl1,
            a: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(0.0..=0.5).contains(&self.s) {
            return bad(format!("s must lie in [0, 0.5], got {}", self.s));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate must be nonnegative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.loss_delta_tol.is_nan() || self.loss_delta_tol < 0.0 {
            return bad(format!(
                "loss_delta_tol must be nonnegative, got {}",
                self.loss_delta_tol
            ));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return bad(format!("TL1 shape a must be positive, got {}", self.a));
        }
        let AdamParams { beta1, beta2, epsilon } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
            return bad(format!("invalid Adam parameters {:?}", self.adam));
        }
        Ok(())
    }
}

/// Balance between TL1 and group terms for layer `l` of `num_layers`
/// (1-based): `s + (1 - 2s)(l - 1)/(L - 1)`, or 0.5 for a single layer.
pub fn mu_schedule(l: usize, num_layers: usize, s: f64) -> f64 {
    if num_layers <= 1 {
        return 0.5;
    }
    s + (1.0 - 2.0 * s) * (l - 1) as f64 / (num_layers - 1) as f64
}

/// Adam first and second moments for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Updates the moments with `gradient` and returns the bias-corrected
    /// step `-lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, gradient: &[f64], params: &AdamParams, lr: f64) -> Vec<f64> {
        assert_eq!(gradient.len(), self.m.len(), "gradient length");
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - params.beta1.powi(t);
        let c2 = 1.0 - params.beta2.powi(t);
        self.m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(gradient)
            .map(|((m, v), &g)| {
                *m = params.beta1 * *m + (1.0 - params.beta1) * g;
                *v = params.beta2 * *v + (1.0 - params.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                -lr * m_hat / (v_hat.sqrt() + params.epsilon)
            })
            .collect()
    }
}

fn partition_for(spec: &LayerSpec) -> GroupPartition {
    let (rows, cols) = spec.weight_shape();
    match spec {
        LayerSpec::Dense { .. } => GroupPartition::dense_rows(rows, cols),
        LayerSpec::Conv2d { .. } => GroupPartition::conv_filters(rows, cols),
    }
}

/// Stateful optimizer for one model: holds Adam moments and the group
/// partitions of each layer.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    partitions: Vec<GroupPartition>,
    adam: Vec<(AdamState, AdamState)>,
    iteration: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: &NetworkModel) -> Result<Self> {
        config.validate()?;
        let partitions = model.layers().iter().map(|l| partition_for(&l.spec)).collect();
        let adam = model
            .layers()
            .iter()
            .map(|l| (AdamState::new(l.weights.len()), AdamState::new(l.bias.len())))
            .collect();
        Ok(Trainer {
            config,
            partitions,
            adam,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Iterations taken so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One iteration on a minibatch: gradient of the mean loss, update,
    /// prox. Returns the minibatch loss before the update.
    pub fn step(
        &mut self,
        model: &mut NetworkModel,
        batch: ArrayView2<'_, f64>,
        labels: ArrayView2<'_, f64>,
    ) -> Result<f64> {
        let (loss, grads) = model.loss_and_grads(batch, labels)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: self.iteration + 1,
                loss,
            });
        }
        self.apply_gradients(model, &grads)?;
        Ok(loss)
    }

    /// Update every layer from precomputed gradients, then apply the
    /// regularizer's prox.
    pub fn apply_gradients(&mut self, model: &mut NetworkModel, grads: &[LayerGradient]) -> Result<()> {
        if grads.len() != model.num_layers() {
            return Err(Error::Model(format!(
                "{} gradients for {} layers",
                grads.len(),
                model.num_layers()
            )));
        }
        self.iteration += 1;
        let cfg = &self.config;
        let lr = cfg.learning_rate;
        let num_layers = model.num_layers();
        for (l, (layer, grad)) in model.layers_mut().iter_mut().zip(grads).enumerate() {
            if grad.weights.dim() != layer.weights.shape() || grad.bias.len() != layer.bias.len() {
                return Err(Error::Shape {
                    layer: l,
                    expected: format!("gradient for {:?} weights", layer.weights.shape()),
                    found: format!("{:?}", grad.weights.dim()),
                });
            }
            let mut g_w = grad.weights.clone();
            if cfg.regularizer_mode == RegularizerMode::L2 && cfg.lambda != 0.0 {
                g_w.scaled_add(cfg.lambda, layer.weights.as_array());
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    layer.weights.as_array_mut().scaled_add(-lr, &g_w);
                    layer.bias.scaled_add(-lr, &grad.bias);
                }
                Optimizer::Adam => {
                    let (sw, sb) = &mut self.adam[l];
                    let step_w = sw.step(g_w.as_slice().expect("contiguous gradient"), &cfg.adam, lr);
                    let step_b = sb.step(grad.bias.as_slice().expect("contiguous gradient"), &cfg.adam, lr);
                    layer
                        .weights
                        .as_array_mut()
                        .iter_mut()
                        .zip(step_w)
                        .for_each(|(w, d)| *w += d);
                    layer.bias.iter_mut().zip(step_b).for_each(|(b, d)| *b += d);
                }
            }
            if !layer.weights.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Divergence {
                    iteration: self.iteration,
                    loss: f64::NAN,
                });
            }

            let mu = mu_schedule(l + 1, num_layers, cfg.s);
            let scaled = cfg.lambda * lr;
            let partition = &self.partitions[l];
            let w = &mut layer.weights;
            match cfg.regularizer_mode {
                RegularizerMode::None | RegularizerMode::L2 => {}
                RegularizerMode::L1 => l1_prox_in_place(w, scaled),
                RegularizerMode::GroupOnly => group_prox_in_place(w, partition, scaled)?,
                RegularizerMode::Tl1Only => tl1_prox_in_place(w, ProxStep::new(scaled, cfg.a)?)?,
                RegularizerMode::Sgl => {
                    l1_prox_in_place(w, scaled * mu);
                    group_prox_in_place(w, partition, scaled * (1.0 - mu))?;
                }
                RegularizerMode::IntegratedTl1 => {
                    integrated_prox_in_place(w, partition, cfg.lambda, lr, mu, cfg.a)?;
                }
            }
        }
        Ok(())
    }
}

/// The sample order of epoch `epoch`: a pure function of `(seed, epoch)`.
pub fn epoch_permutation(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// One row of a training trace, recorded at the end of each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Minibatch iterations completed.
    pub iteration: usize,
    /// Sample-weighted mean minibatch loss over the epoch.
    pub loss: f64,
    pub report: SparsityReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str = "iteration,loss,accuracy,nonzero_fraction,flop_ratio,neurons_removed";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                sig9(r.loss),
                sig9(r.report.accuracy),
                sig9(r.report.nonzero_fraction),
                sig9(r.report.flop_ratio),
                r.report.neurons_removed
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        buf.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs proximal training until the epoch-averaged loss changes by less
/// than `loss_delta_tol` between consecutive epochs or `max_iterations`
/// minibatches have been processed. Each epoch's report uses `eval` when
/// given, the training set otherwise.
pub fn train(
    mut model: NetworkModel,
    train_set: &Dataset,
    eval: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(NetworkModel, TrainTrace)> {
    config.validate()?;
    train_set.validate()?;
    if config.batch_size > train_set.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} training samples",
            config.batch_size,
            train_set.len()
        )));
    }
    if train_set.num_features() != model.input_len() {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("{} input features", model.input_len()),
            found: format!("{} features in the dataset", train_set.num_features()),
        });
    }
    if train_set.num_classes > model.output_len() {
        return Err(Error::Shape {
            layer: model.num_layers() - 1,
            expected: format!("at least {} outputs", train_set.num_classes),
            found: format!("{} outputs", model.output_len()),
        });
    }
    let mut trace = TrainTrace::default();
    if config.max_iterations == 0 {
        return Ok((model, trace));
    }
    let labels = crate::data::one_hot(&train_set.labels, model.output_len())?;
    let mut trainer = Trainer::new(config.clone(), &model)?;
    let report_set = eval.unwrap_or(train_set);
    let mut previous: Option<f64> = None;
    let mut epoch = 0u64;
    loop {
        let order = epoch_permutation(config.seed, epoch, train_set.len());
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = train_set.features.select(Axis(0), chunk);
            let y: Array2<f64> = labels.select(Axis(0), chunk);
            let loss = trainer.step(&mut model, x.view(), y.view())?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            if trainer.iteration() >= config.max_iterations {
                break;
            }
        }
        let epoch_loss = loss_sum / seen as f64;
        trace.records.push(TraceRecord {
            iteration: trainer.iteration(),
            loss: epoch_loss,
            report: SparsityReport::compute(&model, report_set)?,
        });
        if trainer.iteration() >= config.max_iterations {
            break;
        }
        if previous.is_some_and(|p| (epoch_loss - p).abs() < config.loss_delta_tol) {
            break;
        }
        previous = Some(epoch_loss);
        epoch += 1;
    }
    Ok((model, trace))
}
