use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Train/validation/test fractions. Whatever they leave over is reported as
/// an explicit `unassigned` partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            train_frac: 0.625,
            val_frac: 0.225,
            test_frac: 0.10,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || fr.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "split fractions must lie in [0, 1] and sum to at most 1, got {fr:?}"
            )));
        }
        Ok(())
    }
}

/// Index partitions produced by [`split`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub unassigned: Vec<usize>,
}

fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

// floor with a small guard so that 0.225 * 1000 lands on 225.
fn portion(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 1e-9).floor() as usize
}

/// Seeded permutation of `0..n`, then contiguous slices by fraction.
pub fn split(n: usize, plan: &SplitPlan) -> Result<Split> {
    plan.validate()?;
    let perm = seeded_permutation(n, plan.seed);
    let n_train = portion(plan.train_frac, n);
    let n_val = portion(plan.val_frac, n).min(n - n_train);
    let n_test = portion(plan.test_frac, n).min(n - n_train - n_val);
    let (train, rest) = perm.split_at(n_train);
    let (val, rest) = rest.split_at(n_val);
    let (test, unassigned) = rest.split_at(n_test);
    Ok(Split {
        train: train.to_vec(),
        val: val.to_vec(),
        test: test.to_vec(),
        unassigned: unassigned.to_vec(),
    })
}

/// `k` disjoint test folds covering `0..n`; sizes differ by at most one,
/// the first `n % k` folds taking the extra element.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("K must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("K = {k} exceeds the {n} available pixels")));
    }
    let perm = seeded_permutation(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}
