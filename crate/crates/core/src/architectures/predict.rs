use serde::{Deserialize, Serialize};

use super::{Model, ModelOutputs};
use crate::datasynth::CloudLabel;
use crate::gradcore::Matrix;
use crate::metrics::{evaluate, ClassScores, EvalReport, FmgSpace, ScoredPredictions};
use crate::Result;

/// Hard per-pixel decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub label_hat: Vec<CloudLabel>,
    /// Only for pixels predicted cloudy.
    pub cot_hat: Vec<Option<f64>>,
    pub cloud_hat: Vec<bool>,
}

/// Decision rules. Conditional heads: cloudy iff `u_cloud >= threshold`, then
/// liquid iff `u_liquid >= u_ice`. Flat heads: argmax over
/// `[u_cloud, u_clear, u_liquid, u_ice]` (first maximum wins), cloudy unless
/// that is clear, phase again by `u_liquid >= u_ice`.
pub fn decide(out: &ModelOutputs, threshold: f64) -> Predictions {
    let n = out.len();
    let mut p = Predictions {
        label_hat: Vec::with_capacity(n),
        cot_hat: Vec::with_capacity(n),
        cloud_hat: Vec::with_capacity(n),
    };
    for i in 0..n {
        let cloudy = if out.phase_conditional {
            out.u_cloud[i] >= threshold
        } else {
            let u = [out.u_cloud[i], out.u_clear[i], out.u_liquid[i], out.u_ice[i]];
            let arg = (1..4).fold(0, |best, j| if u[j] > u[best] { j } else { best });
            arg != 1
        };
        let label = match (cloudy, out.u_liquid[i] >= out.u_ice[i]) {
            (false, _) => CloudLabel::Clear,
            (true, true) => CloudLabel::Liquid,
            (true, false) => CloudLabel::Ice,
        };
        p.cloud_hat.push(cloudy);
        p.label_hat.push(label);
        p.cot_hat.push(cloudy.then_some(out.y_cot_hat[i]));
    }
    p
}

/// PR-curve scores: joint class probabilities.
pub fn class_scores(out: &ModelOutputs) -> ClassScores {
    let joint = |v: &[f64]| -> Vec<f64> {
        if out.phase_conditional {
            v.iter().zip(&out.u_cloud).map(|(a, c)| a * c).collect()
        } else {
            v.to_vec()
        }
    };
    ClassScores {
        cloudy: out.u_cloud.clone(),
        clear: out.u_clear.clone(),
        liquid: joint(&out.u_liquid),
        ice: joint(&out.u_ice),
    }
}

impl Model {
    /// Inference-mode decisions.
    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        Ok(decide(&self.forward(x, false)?, self.spec().threshold))
    }

    pub fn score(&self, x: &Matrix) -> Result<ScoredPredictions> {
        let out = self.forward(x, false)?;
        let p = decide(&out, self.spec().threshold);
        Ok(ScoredPredictions {
            cloud_hat: p.cloud_hat,
            label_hat: p.label_hat,
            scores: class_scores(&out),
            y_cot_hat: out.y_cot_hat,
        })
    }

    pub fn evaluate(&self, x: &Matrix, labels: &[CloudLabel], cot: &[Option<f64>], space: FmgSpace) -> Result<EvalReport> {
        evaluate(labels, cot, &self.score(x)?, space)
    }
}
