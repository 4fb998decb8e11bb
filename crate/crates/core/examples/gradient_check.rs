// Compares backpropagated gradients of a conv + dense network against
// central finite differences of the cross-entropy loss.

use std::error::Error;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparseprox::data::one_hot;
use sparseprox::nn::{dense, Activation, InitScheme, LayerSpec, NetworkModel};

const STEP: f64 = 1e-5;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let specs = [
        LayerSpec::Conv2d {
            filters: 4,
            kernel_size: 3,
            in_channels: 1,
            in_height: 5,
            in_width: 5,
            activation: Activation::Relu,
        },
        dense(36, 32, Activation::Relu),
        dense(32, 3, Activation::Softmax),
    ];
    let model = NetworkModel::initialized(&specs, InitScheme::Xavier, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_fn((4, 25), |_| rng.random_range(-1.0..1.0));
    let y = one_hot(&[0, 2, 1, 2], 3)?;

    let (loss, grads) = model.loss_and_grads(x.view(), y.view())?;
    println!("loss {loss:.6}");
    let loss_at = |m: &NetworkModel| -> Result<f64, sparseprox::Error> { Ok(m.loss_and_grads(x.view(), y.view())?.0) };

    for (l, grad) in grads.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let (rows, cols) = model.layers()[l].weights.shape();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = model.clone();
                plus.layers_mut()[l].weights.view_mut()[[r, c]] += STEP;
                let mut minus = model.clone();
                minus.layers_mut()[l].weights.view_mut()[[r, c]] -= STEP;
                let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * STEP);
                let g = grad.weights[[r, c]];
                worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
            }
        }
        println!("layer {l}: {rows}x{cols} weights, worst relative error {worst:.2e}");
        if worst > 1e-4 {
            return Err(format!("layer {l} gradient mismatch {worst:e}").into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("gradient_check: {e}");
        std::process::exit(1);
    }
}
