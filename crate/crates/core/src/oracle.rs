//! Brute-force reference for the TL1 prox, used to verify the closed form.
//!
//! The oracle minimizes the scalar objective
//! `(y - w)^2 / (2 beta) + (a + 1)|y| / (a + |y|)` directly: a dense grid
//! over an interval that contains every candidate, then golden-section
//! refinement around each grid-local minimum. It shares no code with
//! [`crate::prox`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::prox::{tl1_prox_scalar, ProxStep};

const GRID_POINTS: usize = 40_001;
const GOLDEN_TOL: f64 = 1e-13;

/// TL1 shapes sampled by [`prox_check`].
pub const CHECK_SHAPES: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 1e2];

/// Tolerance on the closed-form vs brute-force deviation.
pub const CHECK_TOLERANCE: f64 = 1e-6;

fn objective(y: f64, w: f64, beta: f64, a: f64) -> f64 {
    let d = y - w;
    let ay = y.abs();
    d * d / (2.0 * beta) + (a + 1.0) * ay / (a + ay)
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= GOLDEN_TOL {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Global minimizer of the scalar TL1 prox objective by exhaustive search.
pub fn brute_force_tl1_prox(w: f64, beta: f64, a: f64) -> f64 {
    if beta == 0.0 {
        return w;
    }
    let f = |y: f64| objective(y, w, beta, a);
    let lo = -w.abs() - 1.0;
    let hi = w.abs() + 1.0;
    let h = (hi - lo) / (GRID_POINTS - 1) as f64;
    let ys: Vec<f64> = (0..GRID_POINTS).map(|i| lo + h * i as f64).collect();
    let fs: Vec<f64> = ys.iter().map(|&y| f(y)).collect();

    let mut best_y = 0.0;
    let mut best_f = f(0.0);
    for i in 0..GRID_POINTS {
        let left = if i == 0 { f64::INFINITY } else { fs[i - 1] };
        let right = if i + 1 == GRID_POINTS { f64::INFINITY } else { fs[i + 1] };
        if fs[i] <= left && fs[i] <= right {
            let a_lo = ys[i] - h;
            let a_hi = ys[i] + h;
            let y = golden_section(f, a_lo, a_hi);
            let fy = f(y);
            if fy < best_f {
                best_f = fy;
                best_y = y;
            }
        }
    }
    best_y
}

/// Outcome of comparing the closed-form prox with the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxCheckReport {
    pub samples: usize,
    pub seed: u64,
    pub max_deviation: f64,
    /// `(w, beta, a)` at the largest deviation.
    pub worst: (f64, f64, f64),
}

impl ProxCheckReport {
    pub fn passed(&self) -> bool {
        self.max_deviation <= CHECK_TOLERANCE
    }
}

/// Samples `samples` triples with `w` uniform on [-5, 5], `beta` uniform
/// on (0, 2], and `a` drawn from [`CHECK_SHAPES`], and records the largest
/// absolute difference between the closed form and the oracle.
pub fn prox_check(samples: usize, seed: u64) -> Result<ProxCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProxCheckReport {
        samples,
        seed,
        max_deviation: 0.0,
        worst: (0.0, 0.0, 0.0),
    };
    for _ in 0..samples {
        let w = rng.random_range(-5.0..=5.0);
        let beta = 2.0 * (1.0 - rng.random::<f64>());
        let a = CHECK_SHAPES[rng.random_range(0..CHECK_SHAPES.len())];
        let closed = tl1_prox_scalar(w, ProxStep::new(beta, a)?)?;
        let dev = (closed - brute_force_tl1_prox(w, beta, a)).abs();
        if dev > report.max_deviation || report.worst == (0.0, 0.0, 0.0) {
            report.max_deviation = report.max_deviation.max(dev);
            report.worst = (w, beta, a);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_knows_easy_cases() {
        // large a: soft thresholding
        assert!((brute_force_tl1_prox(2.0, 0.5, 1e6) - 1.5).abs() < 1e-5);
        // below threshold: zero
        assert!(brute_force_tl1_prox(0.5, 0.5, 1.0).abs() < 1e-9);
        assert_eq!(brute_force_tl1_prox(0.7, 0.0, 1.0), 0.7);
    }

    #[test]
    fn check_is_deterministic() {
        let a = prox_check(50, 7).unwrap();
        let b = prox_check(50, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.passed(), "{a:?}");
    }
}
