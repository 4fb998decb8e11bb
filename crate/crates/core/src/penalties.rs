//! Value functions of sparsity-inducing penalties.
//!
//! Every penalty here is even, vanishes at the origin, and is
//! non-decreasing in `|x|`. Only the transformed L1 (`Tl1`) penalty has a
//! proximal operator in this crate (see [`crate::prox`]); the others exist
//! to compare level sets.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::sig9;

/// A penalty together with its shape parameters.
///
/// `Scad` and `Mcp` carry their own internal `lambda`; it is a shape
/// parameter of the penalty and unrelated to the training regularization
/// weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// Number of nonzero entries (bitwise test, no tolerance).
    L0,
    L1,
    /// Euclidean norm. Not separable.
    L2,
    /// Smoothly clipped absolute deviation, `lambda > 0`, `gamma > 2`.
    Scad {
        lambda: f64,
        gamma: f64,
    },
    /// Minimax concave penalty, `lambda > 0`, `gamma > 1`.
    Mcp {
        lambda: f64,
        gamma: f64,
    },
    /// `log(gamma |x| + 1) / log(gamma + 1)`, `gamma > 0`.
    Log {
        gamma: f64,
    },
    /// `min(|x|, a)`, `a > 0`.
    CappedL1 {
        a: f64,
    },
    /// `(sum |x_i|^p)^(1/p)` for `p` in (0, 1). Not separable.
    Lp {
        p: f64,
    },
    /// `||x||_1 - ||x||_2`. Not separable.
    L1MinusL2,
    /// Transformed L1: `(a + 1)|x| / (a + |x|)`, `a > 0`.
    Tl1 {
        a: f64,
    },
}

/// Names accepted by [`PenaltySpec::from_name`].
pub const PENALTY_NAMES: [&str; 10] = [
    "l0",
    "l1",
    "l2",
    "scad",
    "mcp",
    "log",
    "capped_l1",
    "lp",
    "l1_minus_l2",
    "tl1",
];

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPenalty(format!("{name} must be positive, got {v}")))
    }
}

impl PenaltySpec {
    pub fn tl1(a: f64) -> Result<Self> {
        let spec = PenaltySpec::Tl1 { a };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from a lowercase kind name. Parameters the kind does
    /// not use are ignored.
    pub fn from_name(name: &str, a: f64, lambda: f64, gamma: f64, p: f64) -> Result<Self> {
        let spec = match name {
            "l0" => PenaltySpec::L0,
            "l1" => PenaltySpec::L1,
            "l2" => PenaltySpec::L2,
            "scad" => PenaltySpec::Scad { lambda, gamma },
            "mcp" => PenaltySpec::Mcp { lambda, gamma },
            "log" => PenaltySpec::Log { gamma },
            "capped_l1" => PenaltySpec::CappedL1 { a },
            "lp" => PenaltySpec::Lp { p },
            "l1_minus_l2" => PenaltySpec::L1MinusL2,
            "tl1" => PenaltySpec::Tl1 { a },
            other => {
                return Err(Error::InvalidPenalty(format!(
                    "unknown penalty kind `{other}` (supported: {})",
                    PENALTY_NAMES.join(", ")
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltySpec::L0 | PenaltySpec::L1 | PenaltySpec::L2 | PenaltySpec::L1MinusL2 => Ok(()),
            PenaltySpec::Scad { lambda, gamma } => {
                positive("SCAD lambda", lambda)?;
                if gamma.is_finite() && gamma > 2.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidPenalty(format!("SCAD gamma must exceed 2, got {gamma}")))
                }
            }
            PenaltySpec::Mcp { lambda, gamma } => {
                positive("MCP lambda", lambda)?;
                if gamma.is_finite() && gamma > 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidPenalty(format!("MCP gamma must exceed 1, got {gamma}")))
                }
            }
            PenaltySpec::Log { gamma } => positive("log-penalty gamma", gamma),
            PenaltySpec::CappedL1 { a } => positive("capped-L1 a", a),
            PenaltySpec::Tl1 { a } => positive("TL1 a", a),
            PenaltySpec::Lp { p } => {
                if p > 0.0 && p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidPenalty(format!(
                        "Lp exponent must lie in (0, 1), got {p}"
                    )))
                }
            }
        }
    }

    fn is_separable(&self) -> bool {
        !matches!(self, PenaltySpec::L2 | PenaltySpec::Lp { .. } | PenaltySpec::L1MinusL2)
    }
}

/// The transformed L1 function `rho_a(x) = (a + 1)|x| / (a + |x|)`.
#[inline]
pub fn tl1_rho(x: f64, a: f64) -> f64 {
    let ax = x.abs();
    (a + 1.0) * ax / (a + ax)
}

fn scalar_unchecked(spec: &PenaltySpec, x: f64) -> f64 {
    let ax = x.abs();
    match *spec {
        PenaltySpec::L0 => {
            if x != 0.0 {
                1.0
            } else {
                0.0
            }
        }
        PenaltySpec::L1 | PenaltySpec::L2 => ax,
        PenaltySpec::Scad { lambda, gamma } => {
            if ax <= lambda {
                lambda * ax
            } else if ax < gamma * lambda {
                (2.0 * gamma * lambda * ax - x * x - lambda * lambda) / (2.0 * (gamma - 1.0))
            } else {
                lambda * lambda * (gamma + 1.0) / 2.0
            }
        }
        PenaltySpec::Mcp { lambda, gamma } => {
            if ax <= gamma * lambda {
                lambda * ax - x * x / (2.0 * gamma)
            } else {
                gamma * lambda * lambda / 2.0
            }
        }
        PenaltySpec::Log { gamma } => (gamma * ax).ln_1p() / gamma.ln_1p(),
        PenaltySpec::CappedL1 { a } => ax.min(a),
        PenaltySpec::Lp { p } => ax.powf(p),
        PenaltySpec::L1MinusL2 => 0.0,
        PenaltySpec::Tl1 { a } => tl1_rho(x, a),
    }
}

/// Scalar penalty value.
pub fn penalty_value(spec: &PenaltySpec, x: f64) -> Result<f64> {
    spec.validate()?;
    if !x.is_finite() {
        return Err(Error::Domain(format!("penalty argument must be finite, got {x}")));
    }
    Ok(scalar_unchecked(spec, x))
}

/// Penalty of a vector: a sum of scalar values for separable kinds, the
/// norm itself for `L2` and `Lp`, and `||x||_1 - ||x||_2` for `L1MinusL2`.
pub fn penalty_value_vector(spec: &PenaltySpec, x: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.is_empty() {
        return Err(Error::Domain("penalty of an empty vector".into()));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("penalty argument must be finite, got {bad}")));
    }
    if spec.is_separable() {
        return Ok(x.iter().map(|&v| scalar_unchecked(spec, v)).sum());
    }
    let l2 = || x.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(match *spec {
        PenaltySpec::L2 => l2(),
        PenaltySpec::Lp { p } => x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        PenaltySpec::L1MinusL2 => {
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            // ||x||_2 <= ||x||_1 analytically; clamp rounding below zero
            (l1 - l2()).max(0.0)
        }
        _ => unreachable!("separable kinds handled above"),
    })
}

/// Penalty values over a square two-dimensional grid.
///
/// `values[[i, j]]` holds the penalty at `(coord(i), coord(j))`; the first
/// index runs over `x1`, the second over `x2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub half_width: f64,
    pub resolution: usize,
    pub values: Array2<f64>,
}

impl ContourGrid {
    /// Grid coordinate of index `i`. Exactly antisymmetric:
    /// `coord(i) == -coord(resolution - 1 - i)`.
    pub fn coord(&self, i: usize) -> f64 {
        grid_coord(i, self.resolution, self.half_width)
    }

    /// Writes `x1,x2,value` rows, `x2` varying fastest.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x1,x2,value")?;
        for i in 0..self.resolution {
            let x1 = sig9(self.coord(i));
            for j in 0..self.resolution {
                writeln!(out, "{},{},{}", x1, sig9(self.coord(j)), sig9(self.values[[i, j]]))?;
            }
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

fn grid_coord(i: usize, resolution: usize, half_width: f64) -> f64 {
    let steps = (resolution - 1) as f64;
    let k = 2.0 * i as f64 - steps;
    k / steps * half_width
}

/// Evaluates the two-dimensional penalty on `[-half_width, half_width]^2`
/// with `resolution` points per axis.
pub fn contour_grid(spec: &PenaltySpec, half_width: f64, resolution: usize) -> Result<ContourGrid> {
    spec.validate()?;
    if resolution < 2 {
        return Err(Error::Domain(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
    }
    let coords: Vec<f64> = (0..resolution).map(|i| grid_coord(i, resolution, half_width)).collect();
    let mut values = Array2::zeros((resolution, resolution));
    for (i, &x1) in coords.iter().enumerate() {
        for (j, &x2) in coords.iter().enumerate() {
            values[[i, j]] = penalty_value_vector(spec, &[x1, x2])?;
        }
    }
    Ok(ContourGrid {
        half_width,
        resolution,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_kinds() -> Vec<PenaltySpec> {
        vec![
            PenaltySpec::L0,
            PenaltySpec::L1,
            PenaltySpec::L2,
            PenaltySpec::Scad {
                lambda: 0.28,
                gamma: 3.7,
            },
            PenaltySpec::Mcp {
                lambda: 0.4,
                gamma: 2.0,
            },
            PenaltySpec::Log { gamma: 1e3 },
            PenaltySpec::CappedL1 { a: 0.3 },
            PenaltySpec::Lp { p: 0.5 },
            PenaltySpec::L1MinusL2,
            PenaltySpec::Tl1 { a: 1.0 },
        ]
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(penalty_value(&PenaltySpec::Tl1 { a: 1.0 }, 1.0).unwrap(), 1.0);
        assert_eq!(penalty_value(&PenaltySpec::CappedL1 { a: 0.3 }, 0.5).unwrap(), 0.3);
        let scad = PenaltySpec::Scad {
            lambda: 0.28,
            gamma: 3.7,
        };
        assert!((penalty_value(&scad, 0.1).unwrap() - 0.028).abs() < 1e-15);
        for spec in all_kinds() {
            assert_eq!(penalty_value(&spec, 0.0).unwrap(), 0.0, "{spec:?}");
        }
    }

    #[test]
    fn vector_examples() {
        let tl1 = PenaltySpec::Tl1 { a: 1.0 };
        assert_eq!(penalty_value_vector(&tl1, &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(penalty_value_vector(&PenaltySpec::L1MinusL2, &[3.0, 4.0]).unwrap(), 2.0);
        let wide = PenaltySpec::Tl1 { a: 1e8 };
        let v = penalty_value_vector(&wide, &[0.5, -0.5]).unwrap();
        // l1 norm of the argument is 1
        assert!((v - 1.0).abs() <= 1e-6, "{v}");
        let lp = PenaltySpec::Lp { p: 0.5 };
        assert!((penalty_value_vector(&lp, &[1.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            penalty_value(&PenaltySpec::L1, f64::NAN),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            penalty_value(&PenaltySpec::L1, f64::INFINITY),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            penalty_value_vector(&PenaltySpec::L1, &[]),
            Err(Error::Domain(_))
        ));
        assert!(PenaltySpec::tl1(0.0).is_err());
        assert!(PenaltySpec::tl1(-1.0).is_err());
        assert!(penalty_value(
            &PenaltySpec::Scad {
                lambda: 1.0,
                gamma: 2.0
            },
            1.0
        )
        .is_err());
        assert!(penalty_value(
            &PenaltySpec::Mcp {
                lambda: 1.0,
                gamma: 1.0
            },
            1.0
        )
        .is_err());
        assert!(penalty_value(&PenaltySpec::Lp { p: 1.0 }, 1.0).is_err());
        assert!(penalty_value(&PenaltySpec::Log { gamma: 0.0 }, 1.0).is_err());
        assert!(PenaltySpec::from_name("l3", 1.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn irrelevant_parameters_are_ignored() {
        // a is meaningless for SCAD; p for TL1
        assert!(PenaltySpec::from_name("scad", -5.0, 0.28, 3.7, 7.0).is_ok());
        assert!(PenaltySpec::from_name("tl1", 1.0, -1.0, -1.0, 7.0).is_ok());
    }

    #[test]
    fn scad_and_mcp_are_constant_in_the_tail() {
        let (lambda, gamma) = (0.28, 3.7);
        let scad = PenaltySpec::Scad { lambda, gamma };
        let cap = lambda * lambda * (gamma + 1.0) / 2.0;
        for x in [gamma * lambda, 1.2, 5.0, -40.0] {
            assert_eq!(penalty_value(&scad, x).unwrap(), cap);
        }
        let (lambda, gamma) = (0.4, 2.0);
        let mcp = PenaltySpec::Mcp { lambda, gamma };
        let cap = gamma * lambda * lambda / 2.0;
        for x in [gamma * lambda + 1e-12, 1.0, -9.0] {
            assert_eq!(penalty_value(&mcp, x).unwrap(), cap);
        }
    }

    #[test]
    fn tl1_interpolates_l0_and_l1() {
        let xs = [0.1, -0.25, 0.0, 3.0, -1.7, 0.5];
        let l1: f64 = xs.iter().map(|v: &f64| v.abs()).sum();
        let big = penalty_value_vector(&PenaltySpec::Tl1 { a: 1e8 }, &xs).unwrap();
        assert!((big - l1).abs() <= 1e-6 * l1);
        let count = xs.iter().filter(|v| **v != 0.0).count() as f64;
        let small = penalty_value_vector(&PenaltySpec::Tl1 { a: 1e-8 }, &xs).unwrap();
        assert!((small - count).abs() <= 1e-6 * count, "{small} vs {count}");
    }

    #[test]
    fn contour_examples() {
        let g = contour_grid(&PenaltySpec::Tl1 { a: 1.0 }, 1.0, 3).unwrap();
        assert_eq!(g.values[[1, 1]], 0.0);
        let c = g.values[[0, 0]];
        assert_eq!(g.values[[0, 2]], c);
        assert_eq!(g.values[[2, 0]], c);
        assert_eq!(g.values[[2, 2]], c);

        let g = contour_grid(&PenaltySpec::L1, 1.0, 3).unwrap();
        assert_eq!(g.values[[0, 0]], 2.0);
        assert_eq!(g.values[[2, 2]], 2.0);

        assert!(contour_grid(&PenaltySpec::L1, 1.0, 1).is_err());
    }

    #[test]
    fn small_a_contours_approach_l0_away_from_axes() {
        let a = 1e-2;
        let g = contour_grid(&PenaltySpec::Tl1 { a }, 2.0, 41).unwrap();
        for i in 0..41 {
            for j in 0..41 {
                let (x1, x2) = (g.coord(i), g.coord(j));
                let nonzero = [x1, x2].iter().filter(|v| **v != 0.0).count() as f64;
                // independent evaluation of rho_a(|x|) per coordinate
                let direct: f64 = [x1, x2].iter().map(|v| (a + 1.0) * v.abs() / (a + v.abs())).sum();
                assert!((g.values[[i, j]] - direct).abs() < 1e-12);
                if [x1, x2].iter().all(|v| *v == 0.0 || v.abs() >= 0.5) {
                    assert!((g.values[[i, j]] - nonzero).abs() < 0.02 * nonzero.max(1.0));
                }
            }
        }
    }

    #[test]
    fn csv_layout() {
        let g = contour_grid(&PenaltySpec::Tl1 { a: 1.0 }, 1.0, 3).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "x1,x2,value");
        assert_eq!(lines[1], "-1,-1,2");
        assert_eq!(lines[2], "-1,0,1");
        assert_eq!(lines[5], "0,0,0");
        assert_eq!(lines[9], "1,1,2");
    }

    proptest! {
        #[test]
        fn even_and_monotone(x in -50.0f64..50.0, y in -50.0f64..50.0, k in 0usize..10) {
            let spec = all_kinds()[k];
            let fx = penalty_value(&spec, x).unwrap();
            prop_assert_eq!(fx, penalty_value(&spec, -x).unwrap());
            prop_assert!(fx >= 0.0);
            let (lo, hi) = if x.abs() <= y.abs() { (x, y) } else { (y, x) };
            let flo = penalty_value(&spec, lo).unwrap();
            let fhi = penalty_value(&spec, hi).unwrap();
            prop_assert!(flo <= fhi + 1e-12, "{:?}: f({})={} > f({})={}", spec, lo, flo, hi, fhi);
        }

        #[test]
        fn grid_symmetries(res in 2usize..12, hw in 0.1f64..5.0, k in 0usize..10) {
            let g = contour_grid(&all_kinds()[k], hw, res).unwrap();
            for i in 0..res {
                for j in 0..res {
                    let v = g.values[[i, j]];
                    prop_assert_eq!(v, g.values[[res - 1 - i, res - 1 - j]]);
                    prop_assert_eq!(v, g.values[[j, i]]);
                }
            }
        }
    }
}
