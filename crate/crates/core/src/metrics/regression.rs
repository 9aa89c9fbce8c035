use serde::{Deserialize, Serialize};

use crate::datasynth::CloudLabel;
use crate::{Error, Result};

fn check_pair(op: &'static str, y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::dim(op, format!("{} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::UndefinedMetric(format!("{op} on empty input")));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair("mse", y, y_hat)?;
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sse / y.len() as f64)
}

/// Coefficient of determination `1 - SSE / SST`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair("r2", y, y_hat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedMetric("r2 with constant targets".into()));
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Eligibility cutoff on log10 COT (strict).
pub const FMG_MIN_LOG_COT: f64 = 0.7;
pub const FMG_LIQUID_TOL: f64 = 0.25;
pub const FMG_ICE_TOL: f64 = 0.35;

/// Space in which the relative COT error is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FmgSpace {
    /// On the log10 values themselves.
    #[default]
    Log,
    /// On `10^y`.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmgResult {
    pub liquid: Option<f64>,
    pub ice: Option<f64>,
    pub eligible_liquid: usize,
    pub eligible_ice: usize,
}

/// Fraction of eligible pixels per phase whose relative COT error is below
/// the phase tolerance. A phase with no eligible pixels reports `None`.
pub fn fmg(y_cot: &[f64], y_hat: &[f64], phase: &[CloudLabel], space: FmgSpace) -> Result<FmgResult> {
    if y_cot.len() != y_hat.len() || y_cot.len() != phase.len() {
        return Err(Error::dim(
            "fmg",
            format!("lengths {} / {} / {}", y_cot.len(), y_hat.len(), phase.len()),
        ));
    }
    let mut met = [0usize; 2];
    let mut total = [0usize; 2];
    for ((&y, &yh), &ph) in y_cot.iter().zip(y_hat).zip(phase) {
        let (slot, tol) = match ph {
            CloudLabel::Liquid => (0, FMG_LIQUID_TOL),
            CloudLabel::Ice => (1, FMG_ICE_TOL),
            CloudLabel::Clear => return Err(Error::Data("fmg given a clear pixel".into())),
        };
        if !(y > FMG_MIN_LOG_COT) {
            continue;
        }
        let err = match space {
            FmgSpace::Log => ((y - yh) / y).abs(),
            FmgSpace::Linear => {
                let (a, b) = (10f64.powf(y), 10f64.powf(yh));
                ((a - b) / a).abs()
            }
        };
        total[slot] += 1;
        if err < tol {
            met[slot] += 1;
        }
    }
    let frac = |k: usize| (total[k] > 0).then(|| met[k] as f64 / total[k] as f64);
    Ok(FmgResult {
        liquid: frac(0),
        ice: frac(1),
        eligible_liquid: total[0],
        eligible_ice: total[1],
    })
}
