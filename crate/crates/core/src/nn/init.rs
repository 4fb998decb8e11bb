use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LayerSpec, WeightMatrix};

/// Standard deviation of [`InitScheme::NormalRandom`].
pub const NORMAL_RANDOM_STD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Normal with variance `2 / (fan_in + fan_out)`.
    #[default]
    Xavier,
    /// Normal with standard deviation 0.05.
    NormalRandom,
}

/// Fan-in and fan-out used by Xavier scaling. Convolutions count the
/// receptive field on both sides.
fn fans(spec: &LayerSpec) -> (usize, usize) {
    match *spec {
        LayerSpec::Dense { fan_in, fan_out, .. } => (fan_in, fan_out),
        LayerSpec::Conv2d {
            filters,
            kernel_size,
            in_channels,
            ..
        } => {
            let field = kernel_size * kernel_size;
            (field * in_channels, field * filters)
        }
    }
}

/// Draws a weight matrix for `spec`; deterministic in `seed`.
pub fn init_weights(spec: &LayerSpec, scheme: InitScheme, seed: u64) -> WeightMatrix {
    let std = match scheme {
        InitScheme::Xavier => {
            let (fan_in, fan_out) = fans(spec);
            (2.0 / (fan_in + fan_out) as f64).sqrt()
        }
        InitScheme::NormalRandom => NORMAL_RANDOM_STD,
    };
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = spec.weight_shape();
    let values = Array2::from_shape_simple_fn(shape, || normal.sample(&mut rng));
    WeightMatrix::new(values).expect("normal draws are finite")
}

/// Seed for layer `index` of a model seeded with `seed`.
pub(crate) fn layer_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
