//! Composite loss and its gradient with respect to the model outputs.

use serde::{Deserialize, Serialize};

use super::spec::{assign_thickness_bin_with, ArchitectureSpec, RegNormalization};
use super::ModelOutputs;
use crate::datasynth::CloudLabel;
use crate::gradcore::{clamp_prob, Matrix, ParamStore};
use crate::{Error, Result};

/// Per-batch loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cmask: f64,
    pub l_cphase: f64,
    pub l_hc: f64,
    pub l_reg: f64,
    pub l_caux: f64,
    pub l_car: f64,
    pub l_rec: f64,
    pub l_lasso: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Fill the derived sums from the six leaf terms.
    pub fn from_terms(l_cmask: f64, l_cphase: f64, l_reg: f64, l_caux: f64, l_rec: f64, l_lasso: f64) -> Self {
        let l_hc = l_cmask + l_cphase;
        let l_car = l_reg + l_caux;
        Self {
            l_cmask,
            l_cphase,
            l_hc,
            l_reg,
            l_caux,
            l_car,
            l_rec,
            l_lasso,
            total: l_hc + l_car + l_rec + l_lasso,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let named = [
            ("l_cmask", self.l_cmask),
            ("l_cphase", self.l_cphase),
            ("l_reg", self.l_reg),
            ("l_caux", self.l_caux),
            ("l_rec", self.l_rec),
            ("l_lasso", self.l_lasso),
        ];
        match named.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::Numeric((*name).into())),
            None => Ok(()),
        }
    }

    /// Element-wise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        if items.is_empty() {
            return LossBreakdown::default();
        }
        let k = items.len() as f64;
        let avg = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / k;
        Self::from_terms(
            avg(|b| b.l_cmask),
            avg(|b| b.l_cphase),
            avg(|b| b.l_reg),
            avg(|b| b.l_caux),
            avg(|b| b.l_rec),
            avg(|b| b.l_lasso),
        )
    }
}

/// Gradient of the loss with respect to each output field.
#[derive(Clone, Debug)]
pub(crate) struct OutputGrads {
    pub cloud: Vec<f64>,
    pub clear: Vec<f64>,
    pub liquid: Vec<f64>,
    pub ice: Vec<f64>,
    pub thickness: Option<Matrix>,
    pub y: Vec<f64>,
    pub recon: Option<Matrix>,
}

/// Loss of one batch without the lasso term, plus output gradients.
pub(crate) fn data_loss(
    spec: &ArchitectureSpec,
    out: &ModelOutputs,
    x: &Matrix,
    labels: &[CloudLabel],
    cot: &[Option<f64>],
) -> Result<(LossBreakdown, OutputGrads)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Data("loss on an empty batch".into()));
    }
    if cot.len() != n || out.len() != n || x.rows() != n {
        return Err(Error::dim(
            "compute_loss",
            format!("{n} labels, {} targets, {} outputs, {} input rows", cot.len(), out.len(), x.rows()),
        ));
    }
    let nf = n as f64;
    let mut g = OutputGrads {
        cloud: vec![0.0; n],
        clear: vec![0.0; n],
        liquid: vec![0.0; n],
        ice: vec![0.0; n],
        thickness: out.thickness.as_ref().map(|t| Matrix::zeros(t.rows(), 3)),
        y: vec![0.0; n],
        recon: None,
    };
    let (mut l_cmask, mut l_cphase, mut l_reg, mut l_caux) = (0.0, 0.0, 0.0, 0.0);
    let reg_scale = match spec.reg_normalization {
        RegNormalization::Sum => 1.0,
        RegNormalization::Mean => 1.0 / nf,
    };

    for i in 0..n {
        let (lc, lcl, lci) = match labels[i] {
            CloudLabel::Clear => (0.0, 0.0, 0.0),
            CloudLabel::Liquid => (1.0, 1.0, 0.0),
            CloudLabel::Ice => (1.0, 0.0, 1.0),
        };
        let lcb = 1.0 - lc;
        let (uc, ucb, ul, ui) = (out.u_cloud[i], out.u_clear[i], out.u_liquid[i], out.u_ice[i]);

        l_cmask -= (lc * uc.ln() + lcb * ucb.ln()) / nf;
        g.cloud[i] -= lc / (nf * uc);
        g.clear[i] -= lcb / (nf * ucb);

        if spec.hc_enabled {
            let (a, b) = ((uc * ul).ln(), (uc * ui).ln());
            l_cphase -= uc * (lcl * a + lci * b) / nf;
            g.cloud[i] -= (lcl * (a + 1.0) + lci * (b + 1.0)) / nf;
            g.liquid[i] -= uc * lcl / (nf * ul);
            g.ice[i] -= uc * lci / (nf * ui);
        } else {
            l_cphase -= (lcl * ul.ln() + lci * ui.ln()) / nf;
            g.liquid[i] -= lcl / (nf * ul);
            g.ice[i] -= lci / (nf * ui);
        }

        if lc == 0.0 {
            continue;
        }
        let y = cot[i].ok_or_else(|| Error::Data(format!("cloudy pixel {i} has no COT target")))?;
        let diff = out.y_cot_hat[i] - y;
        l_reg += reg_scale * diff.abs();
        g.y[i] = reg_scale * if diff > 0.0 { 1.0 } else if diff < 0.0 { -1.0 } else { 0.0 };

        if let (Some(t), Some(gt)) = (out.thickness.as_ref(), g.thickness.as_mut()) {
            let bin = assign_thickness_bin_with(y, &spec.bins)?.index();
            let u = t[(i, bin)];
            l_caux -= clamp_prob(u).ln();
            if clamp_prob(u) == u {
                gt[(i, bin)] = -1.0 / u;
            }
        }
    }

    let mut l_rec = 0.0;
    if let Some(xr) = out.x_recon.as_ref() {
        if xr.shape() != x.shape() {
            return Err(Error::dim("l_rec", format!("{:?} vs {:?}", xr.shape(), x.shape())));
        }
        let scale = 1.0 / (nf * x.cols() as f64);
        let mut gr = Matrix::zeros(n, x.cols());
        for ((gv, a), b) in gr.data_mut().iter_mut().zip(xr.data()).zip(x.data()) {
            l_rec += (a - b).powi(2) * scale;
            *gv = 2.0 * (a - b) * scale;
        }
        g.recon = Some(gr);
    }

    let b = LossBreakdown::from_terms(l_cmask, l_cphase, l_reg, l_caux, l_rec, 0.0);
    b.check_finite()?;
    Ok((b, g))
}

/// Full composite loss of a batch for the given parameters.
pub fn compute_loss(
    spec: &ArchitectureSpec,
    outputs: &ModelOutputs,
    x: &Matrix,
    labels: &[CloudLabel],
    cot: &[Option<f64>],
    stores: &[ParamStore],
    lambda: f64,
) -> Result<LossBreakdown> {
    let (b, _) = data_loss(spec, outputs, x, labels, cot)?;
    let l_lasso = lambda * stores.iter().map(ParamStore::weight_l1).sum::<f64>();
    let b = LossBreakdown::from_terms(b.l_cmask, b.l_cphase, b.l_reg, b.l_caux, b.l_rec, l_lasso);
    b.check_finite()?;
    Ok(b)
}
