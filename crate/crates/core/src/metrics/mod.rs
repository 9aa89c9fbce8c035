//! Evaluation metrics: binary cloud accuracy, per-class and pooled AUPRC,
//! MSE and R² on log COT, and the mission-goal fraction (FMG).

mod classification;
mod regression;

use serde::{Deserialize, Serialize};

pub use classification::{acc_binary, auprc_class, auprc_weighted};
pub use regression::{fmg, mse, r2, FmgResult, FmgSpace, FMG_ICE_TOL, FMG_LIQUID_TOL, FMG_MIN_LOG_COT};

use crate::datasynth::CloudLabel;
use crate::{Error, Result};

/// Per-pixel class scores fed to the PR curves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassScores {
    pub cloudy: Vec<f64>,
    pub clear: Vec<f64>,
    pub liquid: Vec<f64>,
    pub ice: Vec<f64>,
}

/// Everything a model emits that the metrics look at.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPredictions {
    pub cloud_hat: Vec<bool>,
    pub label_hat: Vec<CloudLabel>,
    /// Raw regression output for every pixel, used on truly cloudy pixels.
    pub y_cot_hat: Vec<f64>,
    pub scores: ClassScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuprcPerClass {
    pub cloudy: Option<f64>,
    pub clear: Option<f64>,
    pub liquid: Option<f64>,
    pub ice: Option<f64>,
}

/// Test-set report. Metrics that are undefined on the given data (no
/// positives, constant targets, no eligible pixels) are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub acc_bi: f64,
    pub auprc_per_class: AuprcPerClass,
    pub auprc_weighted: Option<f64>,
    pub mse_all: Option<f64>,
    pub mse_liquid: Option<f64>,
    pub mse_ice: Option<f64>,
    pub r2_all: Option<f64>,
    pub r2_liquid: Option<f64>,
    pub r2_ice: Option<f64>,
    pub fmg_liquid: Option<f64>,
    pub fmg_ice: Option<f64>,
    pub fmg_eligible_liquid: usize,
    pub fmg_eligible_ice: usize,
    pub fmg_space: FmgSpace,
}

impl EvalReport {
    /// Column names used by tabular exports, in order.
    pub const COLUMNS: [&'static str; 17] = [
        "n",
        "acc_bi",
        "auprc_cloudy",
        "auprc_clear",
        "auprc_liquid",
        "auprc_ice",
        "auprc_weighted",
        "mse_all",
        "mse_liquid",
        "mse_ice",
        "r2_all",
        "r2_liquid",
        "r2_ice",
        "fmg_liquid",
        "fmg_ice",
        "fmg_eligible_liquid",
        "fmg_eligible_ice",
    ];

    /// Row values matching [`Self::COLUMNS`]; undefined metrics are empty.
    pub fn row(&self) -> Vec<String> {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let a = &self.auprc_per_class;
        vec![
            self.n.to_string(),
            self.acc_bi.to_string(),
            o(a.cloudy),
            o(a.clear),
            o(a.liquid),
            o(a.ice),
            o(self.auprc_weighted),
            o(self.mse_all),
            o(self.mse_liquid),
            o(self.mse_ice),
            o(self.r2_all),
            o(self.r2_liquid),
            o(self.r2_ice),
            o(self.fmg_liquid),
            o(self.fmg_ice),
            self.fmg_eligible_liquid.to_string(),
            self.fmg_eligible_ice.to_string(),
        ]
    }
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Score predictions against ground truth.
pub fn evaluate(
    labels: &[CloudLabel],
    cot: &[Option<f64>],
    pred: &ScoredPredictions,
    space: FmgSpace,
) -> Result<EvalReport> {
    let n = labels.len();
    let lens = [
        cot.len(),
        pred.cloud_hat.len(),
        pred.label_hat.len(),
        pred.y_cot_hat.len(),
        pred.scores.cloudy.len(),
        pred.scores.clear.len(),
        pred.scores.liquid.len(),
        pred.scores.ice.len(),
    ];
    if lens.iter().any(|&l| l != n) {
        return Err(Error::dim("evaluate", format!("{n} labels vs lengths {lens:?}")));
    }
    let truth_cloud: Vec<bool> = labels.iter().map(|l| l.is_cloudy()).collect();
    let acc_bi = acc_binary(&truth_cloud, &pred.cloud_hat)?;

    let is = |c: CloudLabel| labels.iter().map(|&l| l == c).collect::<Vec<bool>>();
    let (clear, liquid, ice) = (is(CloudLabel::Clear), is(CloudLabel::Liquid), is(CloudLabel::Ice));
    let s = &pred.scores;
    let auprc_per_class = AuprcPerClass {
        cloudy: defined(auprc_class(&s.cloudy, &truth_cloud))?,
        clear: defined(auprc_class(&s.clear, &clear))?,
        liquid: defined(auprc_class(&s.liquid, &liquid))?,
        ice: defined(auprc_class(&s.ice, &ice))?,
    };
    let auprc_weighted = defined(auprc_weighted(
        &[&s.cloudy, &s.clear, &s.liquid, &s.ice],
        &[&truth_cloud, &clear, &liquid, &ice],
    ))?;

    let subset = |keep: &dyn Fn(CloudLabel) -> bool| -> Result<(Vec<f64>, Vec<f64>, Vec<CloudLabel>)> {
        let mut y = Vec::new();
        let mut yh = Vec::new();
        let mut ph = Vec::new();
        for i in 0..n {
            if !keep(labels[i]) {
                continue;
            }
            let t = cot[i].ok_or_else(|| Error::Data(format!("cloudy pixel {i} has no COT target")))?;
            y.push(t);
            yh.push(pred.y_cot_hat[i]);
            ph.push(labels[i]);
        }
        Ok((y, yh, ph))
    };
    let (y_all, yh_all, ph_all) = subset(&|l| l.is_cloudy())?;
    let (y_liq, yh_liq, _) = subset(&|l| l == CloudLabel::Liquid)?;
    let (y_ice, yh_ice, _) = subset(&|l| l == CloudLabel::Ice)?;
    let f = fmg(&y_all, &yh_all, &ph_all, space)?;

    Ok(EvalReport {
        n,
        acc_bi,
        auprc_per_class,
        auprc_weighted,
        mse_all: defined(mse(&y_all, &yh_all))?,
        mse_liquid: defined(mse(&y_liq, &yh_liq))?,
        mse_ice: defined(mse(&y_ice, &yh_ice))?,
        r2_all: defined(r2(&y_all, &yh_all))?,
        r2_liquid: defined(r2(&y_liq, &yh_liq))?,
        r2_ice: defined(r2(&y_ice, &yh_ice))?,
        fmg_liquid: f.liquid,
        fmg_ice: f.ice,
        fmg_eligible_liquid: f.eligible_liquid,
        fmg_eligible_ice: f.eligible_ice,
        fmg_space: space,
    })
}
