// Trains the same conv + dense network on the 8x8 digits with group-only,
// TL1-only, and integrated regularization, and compares connection
// sparsity against removed neurons.
//
// Takes a few minutes in release mode:
// `cargo run --release --example regularizer_comparison`.

use std::error::Error;
use std::path::Path;

use sparseprox::data::{load_csv, Dataset, ImageShape};
use sparseprox::metrics::{count_removed_neurons, SparsityReport};
use sparseprox::nn::{Activation, InitScheme, LayerSpec, NetworkModel};
use sparseprox::trainer::{train, RegularizerMode, TrainConfig};

pub const DIGIT_SHAPE: ImageShape = ImageShape {
    height: 8,
    width: 8,
    channels: 1,
};

pub const EPOCHS: usize = 50;

/// Regularization weight used for each mode.
pub const RUNS: [(RegularizerMode, f64); 4] = [
    (RegularizerMode::None, 0.0),
    (RegularizerMode::GroupOnly, 1e-4),
    (RegularizerMode::Tl1Only, 7e-6),
    (RegularizerMode::IntegratedTl1, 1e-4),
];

pub struct Outcome {
    pub mode: RegularizerMode,
    pub lambda: f64,
    pub report: SparsityReport,
    /// Removed units of the last hidden (dense) layer.
    pub final_hidden_removed: usize,
    pub seconds: f64,
}

pub fn digits() -> Result<(Dataset, Dataset), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/digits.csv");
    let data = load_csv(&path)?.scaled(1.0 / 16.0).with_image_shape(DIGIT_SHAPE)?;
    Ok(data.split(0.8, 0)?)
}

pub fn architecture() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            filters: 8,
            kernel_size: 3,
            in_channels: 1,
            in_height: 8,
            in_width: 8,
            activation: Activation::Relu,
        },
        sparseprox::nn::dense(288, 128, Activation::Relu),
        sparseprox::nn::dense(128, 10, Activation::Softmax),
    ]
}

pub fn config(mode: RegularizerMode, lambda: f64, train_len: usize) -> TrainConfig {
    TrainConfig {
        lambda,
        learning_rate: 0.05,
        batch_size: 1,
        max_iterations: EPOCHS * train_len,
        loss_delta_tol: 0.0,
        regularizer_mode: mode,
        a: 1.0,
        seed: 0,
        ..TrainConfig::default()
    }
}

pub fn run_mode(mode: RegularizerMode, lambda: f64) -> Result<Outcome, Box<dyn Error>> {
    let (train_set, test_set) = digits()?;
    let model = NetworkModel::initialized(&architecture(), InitScheme::NormalRandom, 0)?;
    let started = std::time::Instant::now();
    let (model, _) = train(model, &train_set, None, &config(mode, lambda, train_set.len()))?;
    let seconds = started.elapsed().as_secs_f64();
    let report = SparsityReport::compute(&model, &test_set)?;
    let final_hidden_removed = count_removed_neurons(&model).per_layer[1];
    Ok(Outcome {
        mode,
        lambda,
        report,
        final_hidden_removed,
        seconds,
    })
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!(
        "{:<15} {:>7} {:>9} {:>9} {:>8} {:>15} {:>7}",
        "mode", "lambda", "accuracy", "sparsity", "flops", "removed (of 128)", "secs"
    );
    for (mode, lambda) in RUNS {
        let o = run_mode(mode, lambda)?;
        println!(
            "{:<15} {:>7.0e} {:>9.4} {:>8.2}% {:>8.4} {:>15} {:>7.1}",
            format!("{mode:?}"),
            lambda,
            o.report.accuracy,
            100.0 * (1.0 - o.report.nonzero_fraction),
            o.report.flop_ratio,
            o.final_hidden_removed,
            o.seconds
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("regularizer_comparison: {e}");
        std::process::exit(1);
    }
}
