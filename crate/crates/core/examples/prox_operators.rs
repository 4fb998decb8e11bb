// The three proximal operators used in training, applied to a small
// weight matrix, and the closed-form TL1 prox compared against a
// brute-force scalar minimizer.

use std::error::Error;

use sparseprox::nn::WeightMatrix;
use sparseprox::oracle::{brute_force_tl1_prox, prox_check};
use sparseprox::prox::{
    group_prox, integrated_prox, l1_prox, tl1_prox_matrix, tl1_prox_scalar, tl1_threshold, GroupPartition, ProxStep,
};

fn show(label: &str, w: &WeightMatrix) {
    println!("{label}:");
    for row in w.as_array().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:7.3}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!("TL1 thresholds for beta = 0.1:");
    for a in [1e-2, 1e-1, 1.0, 10.0, 1e2] {
        let step = ProxStep::new(0.1, a)?;
        let w = 1.5;
        let closed = tl1_prox_scalar(w, step)?;
        let brute = brute_force_tl1_prox(w, 0.1, a);
        println!(
            "  a = {a:<6} threshold {:.5}  prox(1.5) = {closed:.9}  brute force {brute:.9}",
            tl1_threshold(step)
        );
    }

    let w = WeightMatrix::from_rows(&[&[0.90, -0.05, 0.40], &[0.02, 0.03, -0.01], &[-0.60, 0.30, 0.08]])?;
    let rows = GroupPartition::dense_rows(3, 3);
    show("weights (rows are groups)", &w);
    show("L1 prox, beta 0.1", &l1_prox(&w, 0.1));
    show(
        "TL1 prox, beta 0.1, a 1",
        &tl1_prox_matrix(&w, ProxStep::new(0.1, 1.0)?)?,
    );
    show("group prox, beta 0.1", &group_prox(&w, &rows, 0.1)?);
    show(
        "integrated prox, lambda 1, gamma 0.1, mu 0.5, a 1",
        &integrated_prox(&w, &rows, 1.0, 0.1, 0.5, 1.0)?,
    );

    let report = prox_check(200, 7)?;
    println!(
        "closed form vs brute force over {} random triples: max deviation {:.2e}",
        report.samples, report.max_deviation
    );
    if !report.passed() {
        return Err(format!("prox check failed at {:?}", report.worst).into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("prox_operators: {e}");
        std::process::exit(1);
    }
}
