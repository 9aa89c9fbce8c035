//! Pure forward kernels. The tape calls into these and adds the matching
//! backward rules.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// `input * weight + bias`, with `bias` broadcast over rows.
pub fn dense_forward(input: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(Error::dim(
            "dense_forward",
            format!("bias {:?} for weight {:?}", bias.shape(), weight.shape()),
        ));
    }
    let mut out = input.matmul(weight)?;
    add_row_bias(&mut out, bias);
    Ok(out)
}

pub(crate) fn add_row_bias(out: &mut Matrix, bias: &Matrix) {
    let b = bias.data();
    for i in 0..out.rows() {
        for (o, bj) in out.row_mut(i).iter_mut().zip(b) {
            *o += bj;
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation. Sigmoid values are not clamped here; see
/// [`super::clamp_prob`] for the clamp applied before logarithms.
pub fn activation(input: &Matrix, kind: Activation) -> Matrix {
    match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(input: &Matrix) -> Matrix {
    let mut out = input.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Per-row outer-product attention.
///
/// For each row `i` with vectors `q, k, v` (length `d`), forms the `d x d`
/// score matrix `S[a][b] = q[a] * k[b]`, softmaxes each row of `S`, and
/// returns `y[a] = sum_b A[a][b] * v[b]`. The attention weights of every row
/// are returned alongside (row-major `n * d * d`) for the backward pass.
pub fn attend_outer(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    if q.shape() != k.shape() || q.shape() != v.shape() {
        return Err(Error::dim(
            "attend_outer",
            format!("q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    let (n, d) = q.shape();
    let mut y = Matrix::zeros(n, d);
    let mut weights = vec![0.0; n * d * d];
    for i in 0..n {
        let (qi, ki, vi) = (q.row(i), k.row(i), v.row(i));
        let block = &mut weights[i * d * d..(i + 1) * d * d];
        let yi = y.row_mut(i);
        for a in 0..d {
            let arow = &mut block[a * d..(a + 1) * d];
            for (s, kb) in arow.iter_mut().zip(ki) {
                *s = qi[a] * kb;
            }
            softmax_in_place(arow);
            yi[a] = arow.iter().zip(vi).map(|(w, vb)| w * vb).sum();
        }
    }
    Ok((y, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dense(input: &Matrix, weight: &Matrix, bias: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(input.rows(), weight.cols());
        for i in 0..input.rows() {
            for j in 0..weight.cols() {
                let mut acc = bias[(0, j)];
                for k in 0..input.cols() {
                    acc += input[(i, k)] * weight[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    #[test]
    fn dense_identity_and_hand_case() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let out = dense_forward(&x, &Matrix::identity(2), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);

        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let w = Matrix::from_rows(&[[2.0], [3.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(dense_forward(&x, &w, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn dense_matches_triple_loop() {
        let x = Matrix::from_vec(3, 4, (0..12).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let w = Matrix::from_vec(4, 2, (0..8).map(|v| (v as f64 * 1.3).cos()).collect()).unwrap();
        let b = Matrix::from_rows(&[[0.25, -0.75]]).unwrap();
        let fast = dense_forward(&x, &w, &b).unwrap();
        let slow = naive_dense(&x, &w, &b);
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_shape_errors() {
        let x = Matrix::zeros(1, 3);
        assert!(dense_forward(&x, &Matrix::zeros(2, 2), &Matrix::zeros(1, 2)).is_err());
        assert!(dense_forward(&Matrix::zeros(1, 2), &Matrix::zeros(2, 2), &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn activations() {
        let x = Matrix::from_rows(&[[-1.0, 2.0]]).unwrap();
        assert_eq!(activation(&x, Activation::Relu).data(), &[0.0, 2.0]);
        let s = activation(&Matrix::from_rows(&[[0.0]]).unwrap(), Activation::Sigmoid);
        assert_eq!(s.data(), &[0.5]);
    }

    #[test]
    fn sigmoid_extremes_clamp_for_logs() {
        let s = activation(&Matrix::from_rows(&[[-20.0, 20.0]]).unwrap(), Activation::Sigmoid);
        // 1/(1+e^20) = 2.061e-9, below the clamp floor on both sides.
        let lo = super::super::clamp_prob(s[(0, 0)]);
        let hi = super::super::clamp_prob(s[(0, 1)]);
        assert_eq!(lo, 1e-7);
        assert_eq!(hi, 1.0 - 1e-7);
        assert!(s[(0, 0)] > 0.0 && s[(0, 1)] < 1.0);
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Matrix::from_rows(&[[0.0, 0.0]]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Matrix::from_rows(&[[1000.0, 1000.0]]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Matrix::from_rows(&[[0.0, 3f64.ln()]]).unwrap());
        assert!((s[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((s[(0, 1)] - 0.75).abs() < 1e-15);
    }
}
