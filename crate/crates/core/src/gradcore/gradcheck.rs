//! Central finite-difference verification of analytic gradients.

use super::ParamStore;
use crate::{Error, Result};

/// Kink detection. Away from a kink the slope gap
/// `(f(w+h) - 2f(w) + f(w-h)) / h` equals `f''(w) h` and halves with the step;
/// a kink inside the stencil breaks that scaling. It is measured at `h`,
/// `h/2` and `h/4`; an entry is skipped when a consecutive pair departs from
/// the factor two by more than `KINK_REL` of the larger value plus the
/// rounding floor `KINK_NOISE * eps * max(|f|, 1) / h`.
pub const KINK_REL: f64 = 0.1;
pub const KINK_NOISE: f64 = 64.0;

/// Entries whose analytic and numeric values differ by less than
/// `FD_NOISE * eps * max(|f|, 1) / h` are indistinguishable at the
/// rounding level of the loss and count as agreeing; they are tallied in
/// [`GradCheckReport::noise_limited`].
pub const FD_NOISE: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(parameter name, flat index)` of the worst checked entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub skipped: usize,
    /// Checked entries accepted through the rounding floor.
    pub noise_limited: usize,
    pub pass: bool,
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare the gradients already stored in `store` against central
/// differences `(f(w + h) - f(w - h)) / 2h` of `loss_fn`, entry by entry.
///
/// `store` is perturbed in place and restored before returning.
pub fn finite_diff_check<F>(mut loss_fn: F, store: &mut ParamStore, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let first = loss_fn(store)?;
    let second = loss_fn(store)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism { first, second });
    }
    let f0 = first;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
        noise_limited: 0,
        pass: true,
    };
    for p in 0..store.len() {
        let id = super::ParamId(p);
        let n = store.param(id).value.data().len();
        for e in 0..n {
            let w = store.param(id).value.data()[e];
            let analytic = store.param(id).grad.data()[e];

            let mut eval = |delta: f64, store: &mut ParamStore| {
                store.param_mut(id).value.data_mut()[e] = w + delta;
                let f = loss_fn(store);
                store.param_mut(id).value.data_mut()[e] = w;
                f
            };
            let plus = eval(step, store)?;
            let minus = eval(-step, store)?;
            let mut gaps = [(plus - 2.0 * f0 + minus) / step, 0.0, 0.0];
            for (k, scale) in [(1, 0.5), (2, 0.25)] {
                let h = scale * step;
                gaps[k] = (eval(h, store)? - 2.0 * f0 + eval(-h, store)?) / h;
            }
            let floor = KINK_NOISE * f64::EPSILON * f0.abs().max(1.0) / step;
            let kinked = gaps.windows(2).any(|g| {
                let (wide, narrow) = (g[0], 2.0 * g[1]);
                (wide - narrow).abs() > KINK_REL * wide.abs().max(narrow.abs()) + floor
            });
            if kinked {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let mut err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > tol && (analytic - numeric).abs() <= FD_NOISE * f64::EPSILON * f0.abs().max(1.0) / step {
                report.noise_limited += 1;
                err = 0.0;
            }
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((store.param(id).name.clone(), e));
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    Ok(report)
}
