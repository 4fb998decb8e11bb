//! Valid (no padding), stride-1 2-D cross-correlation.
//!
//! Images are `H x W x C` arrays flattened row-major with the channel
//! fastest. Filters are rows of a [`WeightMatrix`] with taps ordered
//! `(dy * k + dx) * C + c`.

use ndarray::{Array1, Array2, Array3, ArrayView3};

use super::WeightMatrix;
use crate::error::{Error, Result};

/// Geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k: usize,
    pub filters: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        self.in_h - self.k + 1
    }

    pub fn out_w(&self) -> usize {
        self.in_w - self.k + 1
    }

    pub fn taps(&self) -> usize {
        self.k * self.k * self.in_c
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// Forward pass for one image. `out` has length `out_h * out_w * filters`.
/// Zero weights are skipped.
pub(crate) fn forward_into(g: &ConvGeometry, input: &[f64], w: &Array2<f64>, bias: &Array1<f64>, out: &mut [f64]) {
    let (out_w, taps) = (g.out_w(), g.taps());
    let row_stride = g.in_w * g.in_c;
    for oy in 0..g.out_h() {
        for ox in 0..out_w {
            let base = (oy * out_w + ox) * g.filters;
            for f in 0..g.filters {
                let mut acc = bias[f];
                for tap in 0..taps {
                    let wv = w[[f, tap]];
                    if wv == 0.0 {
                        continue;
                    }
                    let c = tap % g.in_c;
                    let dx = (tap / g.in_c) % g.k;
                    let dy = tap / (g.in_c * g.k);
                    acc += wv * input[(oy + dy) * row_stride + (ox + dx) * g.in_c + c];
                }
                out[base + f] = acc;
            }
        }
    }
}

/// Accumulates weight and bias gradients for one image given the gradient
/// of its pre-activation output; optionally the input gradient as well.
pub(crate) fn backward_accumulate(
    g: &ConvGeometry,
    input: &[f64],
    d_out: &[f64],
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
    mut d_in: Option<&mut [f64]>,
) {
    let (out_w, taps) = (g.out_w(), g.taps());
    let row_stride = g.in_w * g.in_c;
    for oy in 0..g.out_h() {
        for ox in 0..out_w {
            let base = (oy * out_w + ox) * g.filters;
            for f in 0..g.filters {
                let d = d_out[base + f];
                if d == 0.0 {
                    continue;
                }
                db[f] += d;
                for tap in 0..taps {
                    let c = tap % g.in_c;
                    let dx = (tap / g.in_c) % g.k;
                    let dy = tap / (g.in_c * g.k);
                    let idx = (oy + dy) * row_stride + (ox + dx) * g.in_c + c;
                    dw[[f, tap]] += d * input[idx];
                    if let Some(d_in) = d_in.as_deref_mut() {
                        d_in[idx] += d * w[[f, tap]];
                    }
                }
            }
        }
    }
}

/// Valid cross-correlation of an `H x W x C_in` image with
/// `filters.rows()` filters, plus a per-filter bias.
pub fn conv2d_forward(input: ArrayView3<'_, f64>, filters: &WeightMatrix, bias: &Array1<f64>) -> Result<Array3<f64>> {
    let (in_h, in_w, in_c) = input.dim();
    let n_filters = filters.rows();
    if in_c == 0 || !filters.cols().is_multiple_of(in_c) {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("filter taps divisible by {in_c} input channels"),
            found: format!("{} taps", filters.cols()),
        });
    }
    let k = ((filters.cols() / in_c) as f64).sqrt().round() as usize;
    if k * k * in_c != filters.cols() {
        return Err(Error::Shape {
            layer: 0,
            expected: "square kernel".into(),
            found: format!("{} taps per channel", filters.cols() / in_c),
        });
    }
    if k > in_h || k > in_w {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("kernel no larger than {in_h}x{in_w}"),
            found: format!("{k}x{k} kernel"),
        });
    }
    if bias.len() != n_filters {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("{n_filters} biases"),
            found: format!("{} biases", bias.len()),
        });
    }
    let g = ConvGeometry {
        in_h,
        in_w,
        in_c,
        k,
        filters: n_filters,
    };
    let flat: Vec<f64> = input.iter().copied().collect();
    let mut out = vec![0.0; g.positions() * n_filters];
    forward_into(&g, &flat, filters.as_array(), bias, &mut out);
    Ok(Array3::from_shape_vec((g.out_h(), g.out_w(), n_filters), out).expect("output shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn unit_kernel_sums_channels() {
        let input = Array3::from_shape_fn((3, 4, 2), |(y, x, c)| (y * 10 + x) as f64 + 0.5 * c as f64);
        let filters = WeightMatrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let out = conv2d_forward(input.view(), &filters, &array![0.0]).unwrap();
        assert_eq!(out.dim(), (3, 4, 1));
        for ((y, x, _), v) in out.indexed_iter() {
            assert_eq!(*v, input[[y, x, 0]] + input[[y, x, 1]]);
        }
    }

    #[test]
    fn zero_filters_give_bias() {
        let input = Array3::from_elem((4, 4, 1), 3.0);
        let filters = WeightMatrix::zeros(2, 4);
        let out = conv2d_forward(input.view(), &filters, &array![0.5, -1.0]).unwrap();
        assert_eq!(out.dim(), (3, 3, 2));
        assert!(out.indexed_iter().all(|((_, _, f), v)| *v == [0.5, -1.0][f]));
    }

    #[test]
    fn local_sums() {
        let input = Array3::from_shape_vec((3, 3, 1), (1..=9).map(f64::from).collect()).unwrap();
        let filters = WeightMatrix::from_rows(&[&[1.0; 4]]).unwrap();
        let out = conv2d_forward(input.view(), &filters, &array![0.0]).unwrap();
        // 1 2 3 / 4 5 6 / 7 8 9
        assert_eq!(out[[0, 0, 0]], 1.0 + 2.0 + 4.0 + 5.0);
        assert_eq!(out[[0, 1, 0]], 2.0 + 3.0 + 5.0 + 6.0);
        assert_eq!(out[[1, 0, 0]], 4.0 + 5.0 + 7.0 + 8.0);
        assert_eq!(out[[1, 1, 0]], 5.0 + 6.0 + 8.0 + 9.0);
    }

    #[test]
    fn cross_correlation_without_flip() {
        let input = Array3::from_shape_vec((2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let filters = WeightMatrix::from_rows(&[&[1.0, 0.0, 0.0, 0.0]]).unwrap();
        let out = conv2d_forward(input.view(), &filters, &array![0.0]).unwrap();
        assert_eq!(out[[0, 0, 0]], 1.0);
    }

    #[test]
    fn kernel_larger_than_input() {
        let input = Array3::zeros((2, 2, 1));
        let filters = WeightMatrix::zeros(1, 9);
        assert!(matches!(
            conv2d_forward(input.view(), &filters, &array![0.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn linear_in_input_and_filters() {
        let x = Array3::from_shape_fn((4, 5, 2), |(y, x, c)| ((y * 7 + x * 3 + c) % 5) as f64 - 2.0);
        let x2 = Array3::from_shape_fn((4, 5, 2), |(y, x, c)| ((y + 2 * x + 3 * c) % 4) as f64 * 0.5);
        let w = WeightMatrix::from_rows(&[&[0.5, -1.0, 0.25, 2.0, 1.0, 0.0, -0.5, 1.5]]).unwrap();
        let b = array![0.0];
        let sum = conv2d_forward((&x + &x2).view(), &w, &b).unwrap();
        let parts = conv2d_forward(x.view(), &w, &b).unwrap() + conv2d_forward(x2.view(), &w, &b).unwrap();
        assert!(sum.iter().zip(parts.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
        let w2 = WeightMatrix::new(w.as_array() * 3.0).unwrap();
        let scaled = conv2d_forward(x.view(), &w2, &b).unwrap();
        let base = conv2d_forward(x.view(), &w, &b).unwrap();
        assert!(scaled.iter().zip(base.iter()).all(|(p, q)| (p - 3.0 * q).abs() < 1e-12));
    }
}
