// Sweeps the regularization weight on a synthetic task and prints how
// accuracy, connection sparsity, and FLOPs trade off.

use std::error::Error;

use sparseprox::data::synthetic_classification;
use sparseprox::metrics::SparsityReport;
use sparseprox::nn::{dense, Activation, InitScheme, NetworkModel};
use sparseprox::trainer::{train, RegularizerMode, TrainConfig};

pub const LAMBDAS: [f64; 4] = [1e-6, 1e-5, 1e-4, 1e-3];

/// Final report for each lambda (0 first, as the unregularized baseline).
pub fn sweep(lambdas: &[f64]) -> Result<Vec<(f64, SparsityReport)>, Box<dyn Error>> {
    let data = synthetic_classification(600, 8, 12, 5, 11)?;
    let (train_set, test_set) = data.split(0.8, 0)?;
    let specs = [dense(20, 32, Activation::Relu), dense(32, 5, Activation::Softmax)];
    let mut points = Vec::new();
    for &lambda in std::iter::once(&0.0).chain(lambdas) {
        let model = NetworkModel::initialized(&specs, InitScheme::Xavier, 0)?;
        let config = TrainConfig {
            lambda,
            learning_rate: 0.05,
            batch_size: 1,
            max_iterations: 30 * 480,
            loss_delta_tol: 0.0,
            regularizer_mode: if lambda == 0.0 {
                RegularizerMode::None
            } else {
                RegularizerMode::IntegratedTl1
            },
            ..TrainConfig::default()
        };
        let (_, trace) = train(model, &train_set, Some(&test_set), &config)?;
        points.push((lambda, trace.last().ok_or("no epochs ran")?.report));
    }
    Ok(points)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!(
        "{:>8} {:>9} {:>9} {:>9} {:>8}",
        "lambda", "accuracy", "nonzero", "flops", "removed"
    );
    for (lambda, r) in sweep(&LAMBDAS)? {
        println!(
            "{lambda:>8.0e} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            r.accuracy, r.nonzero_fraction, r.flop_ratio, r.neurons_removed
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("lambda_sweep: {e}");
        std::process::exit(1);
    }
}
