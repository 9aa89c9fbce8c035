use crate::gradcore::{attend_outer, Matrix};
use crate::{Error, Result};

/// Residual cross attention on per-pixel vectors.
///
/// For pixel `i`, with column vectors `q = W_Q θ2ᵢ`, `k = W_K θ1ᵢ` and
/// `v = W_V θ1ᵢ`, the `d x d` score matrix `S = q kᵀ` is softmaxed row-wise
/// (no `1/sqrt(d)` scaling), `y_A = softmax(S) v`, and the output row is
/// `W_z y_A + θ1ᵢ`.
pub fn cross_attention(
    theta1: &Matrix,
    theta2: &Matrix,
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
    w_z: &Matrix,
) -> Result<Matrix> {
    let d = theta1.cols();
    if theta2.shape() != theta1.shape() {
        return Err(Error::dim(
            "cross_attention",
            format!("theta1 {:?} vs theta2 {:?}", theta1.shape(), theta2.shape()),
        ));
    }
    for (name, w) in [("W_Q", w_q), ("W_K", w_k), ("W_V", w_v), ("W_z", w_z)] {
        if w.shape() != (d, d) {
            return Err(Error::dim("cross_attention", format!("{name} is {:?}, need {d}x{d}", w.shape())));
        }
    }
    let q = theta2.matmul_t(w_q)?;
    let k = theta1.matmul_t(w_k)?;
    let v = theta1.matmul_t(w_v)?;
    let (ya, _) = attend_outer(&q, &k, &v)?;
    let mut out = ya.matmul_t(w_z)?;
    out.add_assign(theta1)?;
    Ok(out)
}
