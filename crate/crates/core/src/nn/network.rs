use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::conv::{self, ConvGeometry};
use super::init::{init_weights, layer_seed, InitScheme};
use super::{Activation, Layer, LayerSpec, WeightMatrix};
use crate::error::{Error, Result};

/// Floor applied to probabilities inside the cross-entropy logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// An ordered stack of convolutional and dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    layers: Vec<Layer>,
}

/// Values kept from a forward pass for backpropagation: the input to each
/// layer and each layer's pre-activation output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
}

/// Gradient of the loss for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

fn geometry(spec: &LayerSpec) -> Option<ConvGeometry> {
    match *spec {
        LayerSpec::Conv2d {
            filters,
            kernel_size,
            in_channels,
            in_height,
            in_width,
            ..
        } => Some(ConvGeometry {
            in_h: in_height,
            in_w: in_width,
            in_c: in_channels,
            k: kernel_size,
            filters,
        }),
        LayerSpec::Dense { .. } => None,
    }
}

fn dense_forward(input: ArrayView2<'_, f64>, w: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let n = input.nrows();
    let fan_out = w.ncols();
    let mut out = Array2::zeros((n, fan_out));
    for (x, mut z) in input.outer_iter().zip(out.outer_iter_mut()) {
        z.assign(bias);
        let z = z.as_slice_mut().expect("contiguous output row");
        for (i, &a) in x.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (zj, &wij) in z.iter_mut().zip(w.row(i).iter()) {
                if wij != 0.0 {
                    *zj += a * wij;
                }
            }
        }
    }
    out
}

fn apply_activation(z: &Array2<f64>, activation: Activation) -> Array2<f64> {
    match activation {
        Activation::Identity => z.clone(),
        Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
        Activation::Softmax => {
            let mut p = z.clone();
            for mut row in p.outer_iter_mut() {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum: f64 = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            p
        }
    }
}

impl NetworkModel {
    /// Validates layer shapes and ordering.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let model = NetworkModel { layers };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model with freshly initialized weights and zero biases.
    pub fn initialized(specs: &[LayerSpec], scheme: InitScheme, seed: u64) -> Result<Self> {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| Layer {
                spec: *spec,
                weights: init_weights(spec, scheme, layer_seed(seed, i)),
                bias: Array1::zeros(spec.bias_len()),
            })
            .collect();
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Model("a network needs at least one layer".into()));
        }
        let last = self.layers.len() - 1;
        let mut seen_dense = false;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check(i)?;
            if layer.spec.activation() == Activation::Softmax && i != last {
                return Err(Error::Model(format!(
                    "softmax on layer {i}; only the final layer may use it"
                )));
            }
            match layer.spec {
                LayerSpec::Dense { .. } => seen_dense = true,
                LayerSpec::Conv2d { .. } if seen_dense => {
                    return Err(Error::Model(format!("convolutional layer {i} follows a dense layer")))
                }
                LayerSpec::Conv2d { .. } => {}
            }
            if i > 0 {
                let prev = &self.layers[i - 1].spec;
                let consistent = match (prev, &layer.spec) {
                    (
                        LayerSpec::Conv2d { filters, .. },
                        LayerSpec::Conv2d {
                            in_channels,
                            in_height,
                            in_width,
                            ..
                        },
                    ) => prev.conv_output_hw() == Some((*in_height, *in_width)) && filters == in_channels,
                    _ => prev.output_len() == layer.spec.input_len(),
                };
                if !consistent {
                    return Err(Error::Shape {
                        layer: i,
                        expected: format!("input compatible with layer {} output ({})", i - 1, prev.output_len()),
                        found: format!("{:?}", layer.spec),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].spec.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_len()
    }

    /// Total number of weights, biases excluded.
    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Output of the final activation for each row of `batch`; with a
    /// softmax head, class probabilities.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(batch).map(|(out, _)| out)
    }

    /// Forward pass keeping the values needed by [`Self::loss_and_grads`].
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if batch.ncols() != self.input_len() {
            return Err(Error::Shape {
                layer: 0,
                expected: format!("{} input features", self.input_len()),
                found: format!("{} features", batch.ncols()),
            });
        }
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut current = batch.to_owned();
        for layer in &self.layers {
            let z = match geometry(&layer.spec) {
                None => dense_forward(current.view(), layer.weights.as_array(), &layer.bias),
                Some(g) => {
                    let n = current.nrows();
                    let mut z = Array2::zeros((n, layer.spec.output_len()));
                    for (x, mut out) in current.outer_iter().zip(z.outer_iter_mut()) {
                        let x = x.to_slice().expect("contiguous input row");
                        let out = out.as_slice_mut().expect("contiguous output row");
                        conv::forward_into(&g, x, layer.weights.as_array(), &layer.bias, out);
                    }
                    z
                }
            };
            let next = apply_activation(&z, layer.spec.activation());
            cache.inputs.push(current);
            cache.pre_activations.push(z);
            current = next;
        }
        Ok((current, cache))
    }

    /// Mean cross-entropy over the batch and its exact gradient with respect
    /// to every weight and bias. The final layer must use softmax.
    pub fn loss_and_grads(
        &self,
        batch: ArrayView2<'_, f64>,
        labels: ArrayView2<'_, f64>,
    ) -> Result<(f64, Vec<LayerGradient>)> {
        let n = batch.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset("loss of an empty batch".into()));
        }
        let last = self.layers.len() - 1;
        if self.layers[last].spec.activation() != Activation::Softmax {
            return Err(Error::Model("cross-entropy requires a softmax output layer".into()));
        }
        if labels.dim() != (n, self.output_len()) {
            return Err(Error::Shape {
                layer: last,
                expected: format!("labels of shape ({n}, {})", self.output_len()),
                found: format!("labels of shape {:?}", labels.dim()),
            });
        }
        let (probs, cache) = self.forward(batch)?;
        let scale = 1.0 / n as f64;
        let mut loss = 0.0;
        for (p, y) in probs.outer_iter().zip(labels.outer_iter()) {
            for (&pk, &yk) in p.iter().zip(y.iter()) {
                if yk != 0.0 {
                    loss -= yk * pk.max(PROBABILITY_FLOOR).ln();
                }
            }
        }
        loss *= scale;

        let mut grads: Vec<LayerGradient> = self
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: Array2::zeros(l.weights.shape()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        // gradient of the loss with respect to the current layer's pre-activation
        let mut delta = (&probs - &labels) * scale;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let w = layer.weights.as_array();
            let grad = &mut grads[l];
            let mut d_input = (l > 0).then(|| Array2::<f64>::zeros(input.dim()));
            match geometry(&layer.spec) {
                None => {
                    for (x, d) in input.outer_iter().zip(delta.outer_iter()) {
                        for (i, &a) in x.iter().enumerate() {
                            if a == 0.0 {
                                continue;
                            }
                            let mut row = grad.weights.row_mut(i);
                            row.scaled_add(a, &d);
                        }
                    }
                    grad.bias = delta.sum_axis(Axis(0));
                    if let Some(d_in) = d_input.as_mut() {
                        for (d, mut out) in delta.outer_iter().zip(d_in.outer_iter_mut()) {
                            for (i, o) in out.iter_mut().enumerate() {
                                let mut acc = 0.0;
                                for (&wij, &dj) in w.row(i).iter().zip(d.iter()) {
                                    if wij != 0.0 {
                                        acc += wij * dj;
                                    }
                                }
                                *o = acc;
                            }
                        }
                    }
                }
                Some(g) => {
                    for (s, (x, d)) in input.outer_iter().zip(delta.outer_iter()).enumerate() {
                        let d_in_row = d_input
                            .as_mut()
                            .map(|m| m.row_mut(s).into_slice().expect("contiguous gradient row"));
                        conv::backward_accumulate(
                            &g,
                            x.to_slice().expect("contiguous input row"),
                            d.to_slice().expect("contiguous delta row"),
                            w,
                            &mut grad.weights,
                            &mut grad.bias,
                            d_in_row,
                        );
                    }
                }
            }
            if let Some(mut d_in) = d_input {
                let prev = &self.layers[l - 1];
                match prev.spec.activation() {
                    Activation::Relu => {
                        d_in.zip_mut_with(&cache.pre_activations[l - 1], |d, &z| {
                            if z <= 0.0 {
                                *d = 0.0;
                            }
                        });
                    }
                    Activation::Identity => {}
                    Activation::Softmax => unreachable!("softmax only on the final layer"),
                }
                delta = d_in;
            }
        }
        Ok((loss, grads))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: NetworkModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Convenience for tests and examples: a dense layer spec.
pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        fan_in,
        fan_out,
        activation,
    }
}

/// Weight matrix for the identity map of width `n`.
pub fn identity_weights(n: usize) -> WeightMatrix {
    WeightMatrix::new(Array2::eye(n)).expect("identity is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    fn labels(classes: &[usize], k: usize) -> Array2<f64> {
        let mut y = Array2::zeros((classes.len(), k));
        for (i, &c) in classes.iter().enumerate() {
            y[[i, c]] = 1.0;
        }
        y
    }

    fn conv_dense_model(seed: u64) -> NetworkModel {
        let specs = [
            LayerSpec::Conv2d {
                filters: 3,
                kernel_size: 2,
                in_channels: 2,
                in_height: 4,
                in_width: 4,
                activation: Activation::Relu,
            },
            dense(27, 6, Activation::Relu),
            dense(6, 4, Activation::Softmax),
        ];
        let mut model = NetworkModel::initialized(&specs, InitScheme::NormalRandom, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for layer in model.layers_mut() {
            layer
                .weights
                .as_array_mut()
                .mapv_inplace(|_| rng.random_range(-0.8..0.8));
            layer.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
        model
    }

    #[test]
    fn zero_logits_give_uniform_probabilities() {
        let layer = Layer::new(
            dense(3, 10, Activation::Softmax),
            WeightMatrix::zeros(3, 10),
            Array1::zeros(10),
        )
        .unwrap();
        let model = NetworkModel::new(vec![layer]).unwrap();
        let x = random_batch(2, 3, 1);
        let p = model.predict(x.view()).unwrap();
        assert!(p.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let (loss, _) = model.loss_and_grads(x.view(), labels(&[3, 7], 10).view()).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer::new(dense(4, 4, Activation::Identity), identity_weights(4), Array1::zeros(4)).unwrap();
        let model = NetworkModel::new(vec![layer]).unwrap();
        let x = random_batch(5, 4, 2);
        assert_eq!(model.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = conv_dense_model(3);
        let p = model.predict(random_batch(7, 32, 4).view()).unwrap();
        for row in p.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradients_match_central_differences() {
        let model = conv_dense_model(5);
        let x = random_batch(3, 32, 6);
        let y = labels(&[0, 3, 1], 4);
        let (_, grads) = model.loss_and_grads(x.view(), y.view()).unwrap();
        let loss_at = |m: &NetworkModel| m.loss_and_grads(x.view(), y.view()).unwrap().0;
        let h = 1e-6;
        for l in 0..model.num_layers() {
            let (rows, cols) = model.layers()[l].weights.shape();
            for r in 0..rows {
                for c in 0..cols {
                    let mut plus = model.clone();
                    plus.layers_mut()[l].weights.view_mut()[[r, c]] += h;
                    let mut minus = model.clone();
                    minus.layers_mut()[l].weights.view_mut()[[r, c]] -= h;
                    let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                    let g = grads[l].weights[[r, c]];
                    assert!(
                        (fd - g).abs() <= 1e-6 + 1e-4 * g.abs(),
                        "layer {l} ({r},{c}): {g} vs {fd}"
                    );
                }
            }
            for b in 0..model.layers()[l].bias.len() {
                let mut plus = model.clone();
                plus.layers_mut()[l].bias[b] += h;
                let mut minus = model.clone();
                minus.layers_mut()[l].bias[b] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let g = grads[l].bias[b];
                assert!(
                    (fd - g).abs() <= 1e-6 + 1e-4 * g.abs(),
                    "layer {l} bias {b}: {g} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_mean_loss_and_gradient() {
        let model = conv_dense_model(7);
        let x = random_batch(3, 32, 8);
        let y = labels(&[2, 2, 0], 4);
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2 = ndarray::concatenate(Axis(0), &[y.view(), y.view()]).unwrap();
        let (l1, g1) = model.loss_and_grads(x.view(), y.view()).unwrap();
        let (l2, g2) = model.loss_and_grads(x2.view(), y2.view()).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!(a
                .weights
                .iter()
                .zip(b.weights.iter())
                .all(|(p, q)| (p - q).abs() < 1e-12));
            assert!(a.bias.iter().zip(b.bias.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
        }
    }

    #[test]
    fn zeroed_weights_equal_pruned_network() {
        // zeroing hidden unit 2 everywhere matches a network without it
        let full = {
            let l0 = Layer::new(
                dense(2, 3, Activation::Relu),
                WeightMatrix::new(array![[0.5, -0.3, 0.0], [0.25, 0.7, 0.0]]).unwrap(),
                array![0.1, 0.2, 0.0],
            )
            .unwrap();
            let l1 = Layer::new(
                dense(3, 2, Activation::Softmax),
                WeightMatrix::new(array![[1.5, -0.5], [0.3, 0.9], [0.0, 0.0]]).unwrap(),
                array![0.05, -0.05],
            )
            .unwrap();
            NetworkModel::new(vec![l0, l1]).unwrap()
        };
        let pruned = {
            let l0 = Layer::new(
                dense(2, 2, Activation::Relu),
                WeightMatrix::new(array![[0.5, -0.3], [0.25, 0.7]]).unwrap(),
                array![0.1, 0.2],
            )
            .unwrap();
            let l1 = Layer::new(
                dense(2, 2, Activation::Softmax),
                WeightMatrix::new(array![[1.5, -0.5], [0.3, 0.9]]).unwrap(),
                array![0.05, -0.05],
            )
            .unwrap();
            NetworkModel::new(vec![l0, l1]).unwrap()
        };
        let x = random_batch(6, 2, 9);
        let a = full.predict(x.view()).unwrap();
        let b = pruned.predict(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let model = conv_dense_model(11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save_json(&path).unwrap();
        assert_eq!(NetworkModel::load_json(&path).unwrap(), model);
    }

    #[test]
    fn invalid_stacks_are_rejected() {
        let soft = Layer::new(dense(2, 2, Activation::Softmax), identity_weights(2), Array1::zeros(2)).unwrap();
        let relu = Layer::new(dense(2, 2, Activation::Relu), identity_weights(2), Array1::zeros(2)).unwrap();
        assert!(NetworkModel::new(vec![soft.clone(), relu.clone()]).is_err());
        let wide = Layer::new(
            dense(3, 2, Activation::Softmax),
            WeightMatrix::zeros(3, 2),
            Array1::zeros(2),
        )
        .unwrap();
        assert!(matches!(NetworkModel::new(vec![relu, wide]), Err(Error::Shape { .. })));
        assert!(NetworkModel::new(vec![]).is_err());
        let model = NetworkModel::new(vec![soft]).unwrap();
        assert!(matches!(
            model.predict(random_batch(1, 3, 0).view()),
            Err(Error::Shape { .. })
        ));
    }
}
