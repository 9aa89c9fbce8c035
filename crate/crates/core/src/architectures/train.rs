use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LossBreakdown, Model, Variant};
use crate::datasynth::{CloudLabel, PixelDataset, Standardizer};
use crate::gradcore::{Adam, Matrix, TrainConfig};
use crate::{Error, Result};

/// Standardised features with their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub x: Matrix,
    pub labels: Vec<CloudLabel>,
    pub cot: Vec<Option<f64>>,
}

impl TrainData {
    pub fn new(x: Matrix, labels: Vec<CloudLabel>, cot: Vec<Option<f64>>) -> Result<Self> {
        if labels.len() != x.rows() || cot.len() != x.rows() {
            return Err(Error::dim(
                "TrainData",
                format!("{} rows, {} labels, {} targets", x.rows(), labels.len(), cot.len()),
            ));
        }
        Ok(Self { x, labels, cot })
    }

    pub fn from_dataset(ds: &PixelDataset, standardizer: &Standardizer) -> Result<Self> {
        Self::new(standardizer.transform(&ds.features())?, ds.labels(), ds.cot())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            cot: idx.iter().map(|&i| self.cot[i]).collect(),
        }
    }
}

/// One epoch of training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// 1-based, counted across SEQ stages.
    pub epoch: usize,
    /// Batch-averaged training components.
    pub train: LossBreakdown,
    pub val_total: Option<f64>,
}

/// Batch-averaged training-mode loss over a dataset, batches in order.
pub fn mean_loss(model: &Model, data: &TrainData, batch_size: usize, lambda: f64) -> Result<LossBreakdown> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = idx
        .chunks(batch_size.max(1))
        .map(|c| {
            let b = data.select(c);
            model.loss(&b.x, &b.labels, &b.cot, lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossBreakdown::mean(&parts))
}

/// Mini-batch training with a seeded reshuffle each epoch. SEQ trains its
/// three networks one after another, `epochs` each, earlier stages frozen.
/// Parameters after the final epoch are kept.
pub fn train(model: &mut Model, train: &TrainData, val: Option<&TrainData>, config: &TrainConfig) -> Result<Vec<HistoryRow>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if train.x.cols() != model.spec().input_dim {
        return Err(Error::Config(format!(
            "training data has {} features, {} expects {}",
            train.x.cols(),
            model.variant(),
            model.spec().input_dim
        )));
    }
    let stages: Vec<usize> = if model.variant() == Variant::Seq { vec![0, 1, 2] } else { vec![0] };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(stages.len() * config.epochs);

    for &stage in &stages {
        let mut adam = Adam::new();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut parts = Vec::with_capacity(order.len().div_ceil(config.batch_size));
            for chunk in order.chunks(config.batch_size) {
                let b = train.select(chunk);
                model.zero_grads();
                parts.push(model.accumulate_gradients(&b.x, &b.labels, &b.cot, config.lasso_lambda)?);
                adam.step(&mut model.stores_mut()[stage], config)?;
            }
            let val_total = match val {
                Some(v) if !v.is_empty() => Some(mean_loss(model, v, config.batch_size, config.lasso_lambda)?.total),
                _ => None,
            };
            history.push(HistoryRow {
                epoch: history.len() + 1,
                train: LossBreakdown::mean(&parts),
                val_total,
            });
        }
    }
    model.zero_grads();
    Ok(history)
}

pub const HISTORY_COLUMNS: [&str; 9] = [
    "epoch", "l_cmask", "l_cphase", "l_reg", "l_caux", "l_rec", "l_lasso", "total", "val_total",
];

pub fn write_history_csv<W: Write>(rows: &[HistoryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HISTORY_COLUMNS)?;
    for r in rows {
        let t = &r.train;
        w.write_record([
            r.epoch.to_string(),
            t.l_cmask.to_string(),
            t.l_cphase.to_string(),
            t.l_reg.to_string(),
            t.l_caux.to_string(),
            t.l_rec.to_string(),
            t.l_lasso.to_string(),
            t.total.to_string(),
            r.val_total.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}
