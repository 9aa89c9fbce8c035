use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whether larger metric values are better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::HigherBetter => "higher_better",
            Self::LowerBetter => "lower_better",
        }
    }

    /// `a` strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Self::HigherBetter => a > b,
            Self::LowerBetter => a < b,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "higher_better" => Ok(Self::HigherBetter),
            "lower_better" => Ok(Self::LowerBetter),
            other => Err(Error::Config(format!("unknown direction {other:?}"))),
        }
    }
}

/// Cross-validation summary of one (model, dataset, metric) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub model: String,
    pub dataset: String,
    pub metric: String,
    pub direction: Direction,
    /// Empty when the cell was loaded from a mean/SE summary.
    pub fold_values: Vec<f64>,
    pub mu: f64,
    pub se: f64,
}

impl FoldStats {
    /// Cell given directly by its mean and standard error.
    pub fn from_summary(
        model: impl Into<String>,
        dataset: impl Into<String>,
        metric: impl Into<String>,
        direction: Direction,
        mu: f64,
        se: f64,
    ) -> Result<Self> {
        if !mu.is_finite() || !(se >= 0.0) || !se.is_finite() {
            return Err(Error::Config(format!("invalid summary mu={mu}, se={se}")));
        }
        Ok(Self {
            model: model.into(),
            dataset: dataset.into(),
            metric: metric.into(),
            direction,
            fold_values: Vec::new(),
            mu,
            se,
        })
    }

    /// `[mu - se, mu + se]`.
    pub fn region(&self) -> (f64, f64) {
        (self.mu - self.se, self.mu + self.se)
    }
}

/// Mean and standard error `s / sqrt(K)` of K fold values, with `s` the
/// sample standard deviation (denominator K - 1).
pub fn fold_stats(
    values: &[f64],
    model: impl Into<String>,
    dataset: impl Into<String>,
    metric: impl Into<String>,
    direction: Direction,
) -> Result<FoldStats> {
    let k = values.len();
    if k < 2 {
        return Err(Error::Config(format!("fold statistics need K >= 2 values, got {k}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("fold values".into()));
    }
    let kf = k as f64;
    let mu0 = values.iter().sum::<f64>() / kf;
    // one refinement pass removes the summation round-off from the mean
    let mu = mu0 + values.iter().map(|v| v - mu0).sum::<f64>() / kf;
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (kf - 1.0);
    Ok(FoldStats {
        model: model.into(),
        dataset: dataset.into(),
        metric: metric.into(),
        direction,
        fold_values: values.to_vec(),
        mu,
        se: var.sqrt() / kf.sqrt(),
    })
}
