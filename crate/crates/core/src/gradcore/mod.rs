//! Reverse-mode differentiation for dense networks.
//!
//! Everything is 64-bit and row-major. A [`Tape`] records the forward
//! composition of one mini-batch; [`Tape::backward`] walks it in reverse and
//! accumulates parameter gradients into a [`ParamStore`]. The finite
//! difference harness in [`gradcheck`] is the independent check on those
//! gradients.

mod matrix;
mod ops;
mod optim;
mod params;
mod tape;

pub mod gradcheck;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::Matrix;
pub use ops::{activation, attend_outer, dense_forward, softmax_rows, Activation};
pub use optim::{Adam, TrainConfig};
pub use params::{xavier_uniform, Param, ParamId, ParamKind, ParamStore};
pub use tape::{Tape, Var};

/// Lower/upper bound applied to every probability before it enters a logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Clamp a probability into `[PROB_EPS, 1 - PROB_EPS]`.
#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}
