// Trains a small network on data where only 5 of 20 input features carry
// class information. The integrated regularizer zeroes the first-layer
// rows of the noise features, pruning those inputs entirely.

use std::error::Error;

use sparseprox::data::synthetic_classification;
use sparseprox::nn::{dense, Activation, InitScheme, NetworkModel};
use sparseprox::trainer::{train, RegularizerMode, TrainConfig};

const INFORMATIVE: usize = 5;
const NOISE: usize = 15;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let data = synthetic_classification(400, INFORMATIVE, NOISE, 2, 3)?;
    let (train_set, test_set) = data.split(0.75, 0)?;
    let specs = [
        dense(INFORMATIVE + NOISE, 16, Activation::Relu),
        dense(16, 2, Activation::Softmax),
    ];
    let model = NetworkModel::initialized(&specs, InitScheme::Xavier, 0)?;
    let config = TrainConfig {
        lambda: 2e-2,
        learning_rate: 0.05,
        batch_size: 10,
        max_iterations: 3000,
        regularizer_mode: RegularizerMode::IntegratedTl1,
        ..TrainConfig::default()
    };
    let (model, trace) = train(model, &train_set, Some(&test_set), &config)?;
    let report = trace.last().ok_or("no epochs ran")?.report;

    let first = model.layers()[0].weights.as_array();
    let noise_rows = first.slice(ndarray::s![INFORMATIVE.., ..]);
    let noise_zero = noise_rows.iter().filter(|v| **v == 0.0).count() as f64 / noise_rows.len() as f64;
    let pruned_inputs = (INFORMATIVE..INFORMATIVE + NOISE)
        .filter(|&i| first.row(i).iter().all(|v| *v == 0.0))
        .count();
    println!(
        "{} epochs, test accuracy {:.3}, nonzero fraction {:.3}",
        trace.len(),
        report.accuracy,
        report.nonzero_fraction
    );
    println!(
        "noise-feature weights zeroed: {:.1}% ({pruned_inputs} of {NOISE} noise inputs pruned)",
        100.0 * noise_zero
    );
    if noise_zero < 0.8 || report.accuracy < 0.95 {
        return Err("noise features were not pruned".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("train_synthetic: {e}");
        std::process::exit(1);
    }
}
