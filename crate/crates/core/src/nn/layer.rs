use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::WeightMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

/// Shape and activation of one layer. Convolutions are stride 1 with no
/// padding; their output is flattened `(y, x, filter)` with the filter
/// index fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
    },
    Conv2d {
        filters: usize,
        kernel_size: usize,
        in_channels: usize,
        in_height: usize,
        in_width: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. })
    }

    /// Flattened input length.
    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::Conv2d {
                in_channels,
                in_height,
                in_width,
                ..
            } => in_channels * in_height * in_width,
        }
    }

    /// Flattened output length.
    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv2d { filters, .. } => {
                let (h, w) = self.conv_output_hw().unwrap_or((0, 0));
                h * w * filters
            }
        }
    }

    /// Number of units the layer produces: dense outputs or conv filters.
    pub fn units(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv2d { filters, .. } => filters,
        }
    }

    /// Spatial output size of a convolution.
    pub fn conv_output_hw(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d {
                kernel_size,
                in_height,
                in_width,
                ..
            } if kernel_size <= in_height && kernel_size <= in_width => {
                Some((in_height - kernel_size + 1, in_width - kernel_size + 1))
            }
            _ => None,
        }
    }

    /// Shape of the weight matrix: `(fan_in, fan_out)` or
    /// `(filters, kernel_size^2 * in_channels)`.
    pub fn weight_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { fan_in, fan_out, .. } => (fan_in, fan_out),
            LayerSpec::Conv2d {
                filters,
                kernel_size,
                in_channels,
                ..
            } => (filters, kernel_size * kernel_size * in_channels),
        }
    }

    pub fn bias_len(&self) -> usize {
        self.units()
    }

    pub(crate) fn validate(&self, layer: usize) -> Result<()> {
        let (r, c) = self.weight_shape();
        if r == 0 || c == 0 {
            return Err(Error::Model(format!("layer {layer} has a zero dimension: {self:?}")));
        }
        if let LayerSpec::Conv2d {
            kernel_size,
            in_height,
            in_width,
            ..
        } = *self
        {
            if self.conv_output_hw().is_none() {
                return Err(Error::Shape {
                    layer,
                    expected: format!("kernel size <= min({in_height}, {in_width})"),
                    found: format!("kernel size {kernel_size}"),
                });
            }
        }
        Ok(())
    }
}

/// A layer's spec with its parameters. Biases are never regularized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: WeightMatrix,
    #[serde(with = "vec_repr")]
    pub bias: Array1<f64>,
}

mod vec_repr {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().expect("contiguous bias").serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Vec::<f64>::deserialize(d).map(Array1::from)
    }
}

impl Layer {
    pub fn new(spec: LayerSpec, weights: WeightMatrix, bias: Array1<f64>) -> Result<Self> {
        let layer = Layer { spec, weights, bias };
        layer.check(0)?;
        Ok(layer)
    }

    pub(crate) fn check(&self, index: usize) -> Result<()> {
        self.spec.validate(index)?;
        if self.weights.shape() != self.spec.weight_shape() {
            return Err(Error::Shape {
                layer: index,
                expected: format!("weights {:?}", self.spec.weight_shape()),
                found: format!("weights {:?}", self.weights.shape()),
            });
        }
        if self.bias.len() != self.spec.bias_len() {
            return Err(Error::Shape {
                layer: index,
                expected: format!("bias of length {}", self.spec.bias_len()),
                found: format!("bias of length {}", self.bias.len()),
            });
        }
        Ok(())
    }
}
