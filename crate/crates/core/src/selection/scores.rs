use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Direction, FoldStats};
use crate::{Error, Result};

/// `model -> dataset -> metric -> value`.
pub type CellMap<T> = BTreeMap<String, BTreeMap<String, BTreeMap<String, T>>>;

/// Absolute-performance and one-standard-error scores over a stats grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionScores {
    /// Signed relative gap to the best mean per cell; worse is negative.
    pub p_ab_components: CellMap<f64>,
    pub p_ab_total: BTreeMap<String, f64>,
    pub psi: CellMap<u8>,
    pub p_1se_total: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    /// Mean resolution used by the 1SE comparison.
    pub resolution: f64,
}

fn rank(order: &[String], model: &str) -> Result<usize> {
    order
        .iter()
        .position(|m| m == model)
        .ok_or_else(|| Error::Config(format!("model {model:?} missing from complexity order")))
}

fn best_index(stats: &[FoldStats], order: &[String]) -> Result<usize> {
    let mut best = 0;
    for (i, s) in stats.iter().enumerate().skip(1) {
        let b = &stats[best];
        let tie = s.mu == b.mu;
        if s.direction.better(s.mu, b.mu) || (tie && rank(order, &s.model)? < rank(order, &b.model)?) {
            best = i;
        }
    }
    Ok(best)
}

fn check_cell(stats: &[FoldStats]) -> Result<()> {
    let first = stats
        .first()
        .ok_or_else(|| Error::Config("one_se_select on an empty cell".into()))?;
    for s in stats {
        if s.dataset != first.dataset || s.metric != first.metric || s.direction != first.direction {
            return Err(Error::Config(format!(
                "cell mixes {}/{}/{} with {}/{}/{}",
                first.dataset,
                first.metric,
                first.direction.as_str(),
                s.dataset,
                s.metric,
                s.direction.as_str()
            )));
        }
    }
    Ok(())
}

/// One-standard-error rule with exact comparison.
pub fn one_se_select(stats: &[FoldStats], complexity_order: &[String]) -> Result<String> {
    one_se_select_with(stats, complexity_order, 0.0)
}

/// One-standard-error rule: the least complex model whose mean lies within
/// the best model's `[mu - se, mu + se]`, falling back to the best model.
///
/// `resolution` is the display precision of the means. Means rounded to that
/// precision are accepted when within `se + resolution / 2` of the best.
pub fn one_se_select_with(stats: &[FoldStats], complexity_order: &[String], resolution: f64) -> Result<String> {
    check_cell(stats)?;
    if !(resolution >= 0.0) {
        return Err(Error::Config(format!("resolution must be non-negative, got {resolution}")));
    }
    let best = &stats[best_index(stats, complexity_order)?];
    // relative slack absorbs round-off in the subtraction of nearby means
    let reach = best.se + resolution / 2.0;
    let reach = reach + 1e-12 * reach.max(best.mu.abs());
    let mut chosen = best;
    for s in stats {
        if (s.mu - best.mu).abs() <= reach && rank(complexity_order, &s.model)? < rank(complexity_order, &chosen.model)? {
            chosen = s;
        }
    }
    Ok(chosen.model.clone())
}

/// Cells of a grid grouped by `(dataset, metric)`.
pub fn group_cells(grid: &[FoldStats]) -> BTreeMap<(String, String), Vec<FoldStats>> {
    let mut cells: BTreeMap<(String, String), Vec<FoldStats>> = BTreeMap::new();
    for s in grid {
        cells
            .entry((s.dataset.clone(), s.metric.clone()))
            .or_default()
            .push(s.clone());
    }
    cells
}

/// Every model must appear exactly once in every (dataset, metric) cell.
pub fn check_complete(grid: &[FoldStats]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty stats grid".into()));
    }
    let models: BTreeSet<&str> = grid.iter().map(|s| s.model.as_str()).collect();
    let datasets: BTreeSet<&str> = grid.iter().map(|s| s.dataset.as_str()).collect();
    let metrics: BTreeSet<&str> = grid.iter().map(|s| s.metric.as_str()).collect();
    let mut seen: BTreeMap<(&str, &str, &str), usize> = BTreeMap::new();
    for s in grid {
        *seen.entry((&s.model, &s.dataset, &s.metric)).or_default() += 1;
    }
    if let Some(((m, d, x), _)) = seen.iter().find(|(_, &c)| c > 1) {
        return Err(Error::Config(format!("duplicate cell {m}/{d}/{x}")));
    }
    let mut missing = Vec::new();
    for m in &models {
        for d in &datasets {
            for x in &metrics {
                if !seen.contains_key(&(*m, *d, *x)) {
                    missing.push(format!("{m}/{d}/{x}"));
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::IncompleteGrid(missing))
    }
}

fn insert<T>(map: &mut CellMap<T>, s: &FoldStats, v: T) {
    map.entry(s.model.clone())
        .or_default()
        .entry(s.dataset.clone())
        .or_default()
        .insert(s.metric.clone(), v);
}

/// Per-cell relative gaps to the best mean and their per-model sums.
pub fn p_ab(grid: &[FoldStats], complexity_order: &[String]) -> Result<(CellMap<f64>, BTreeMap<String, f64>)> {
    check_complete(grid)?;
    let mut components = CellMap::new();
    let mut totals = BTreeMap::new();
    for ((d, m), cell) in group_cells(grid) {
        check_cell(&cell)?;
        let best = cell[best_index(&cell, complexity_order)?].mu;
        if best == 0.0 {
            return Err(Error::UndefinedMetric(format!("best mean is zero in {d}/{m}")));
        }
        for s in &cell {
            let gap = (s.mu - best) / best;
            let v = match s.direction {
                Direction::HigherBetter => gap,
                Direction::LowerBetter => -gap,
            };
            insert(&mut components, s, v);
            *totals.entry(s.model.clone()).or_insert(0.0) += v;
        }
    }
    Ok((components, totals))
}

/// 1SE indicators per cell and their weighted per-model counts. Metrics
/// absent from `weights` count with weight 1.
pub fn p_1se(
    grid: &[FoldStats],
    complexity_order: &[String],
    weights: &BTreeMap<String, f64>,
    resolution: f64,
) -> Result<(CellMap<u8>, BTreeMap<String, f64>)> {
    check_complete(grid)?;
    let mut psi = CellMap::new();
    let mut totals: BTreeMap<String, f64> = grid.iter().map(|s| (s.model.clone(), 0.0)).collect();
    for ((_, metric), cell) in group_cells(grid) {
        let chosen = one_se_select_with(&cell, complexity_order, resolution)?;
        let w = weights.get(&metric).copied().unwrap_or(1.0);
        for s in &cell {
            let hit = u8::from(s.model == chosen);
            insert(&mut psi, s, hit);
            *totals.get_mut(&s.model).expect("model seeded above") += w * f64::from(hit);
        }
    }
    Ok((psi, totals))
}

/// Both scores over a complete grid.
pub fn select(
    grid: &[FoldStats],
    complexity_order: &[String],
    weights: &BTreeMap<String, f64>,
    resolution: f64,
) -> Result<SelectionScores> {
    let (p_ab_components, p_ab_total) = p_ab(grid, complexity_order)?;
    let (psi, p_1se_total) = p_1se(grid, complexity_order, weights, resolution)?;
    let metrics: BTreeSet<&String> = grid.iter().map(|s| &s.metric).collect();
    let weights = metrics
        .into_iter()
        .map(|m| (m.clone(), weights.get(m).copied().unwrap_or(1.0)))
        .collect();
    Ok(SelectionScores {
        p_ab_components,
        p_ab_total,
        psi,
        p_1se_total,
        weights,
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::selection::{default_complexity_order, fold_stats};

    fn cell(mus: &[(&str, f64, f64)], dir: Direction) -> Vec<FoldStats> {
        mus.iter()
            .map(|(m, mu, se)| FoldStats::from_summary(*m, "OCI", "ACC_bi", dir, *mu, *se).unwrap())
            .collect()
    }

    #[test]
    fn simpler_model_inside_region() {
        let order = default_complexity_order();
        let c = cell(
            &[("MT-CR", 0.969, 7.608e-4), ("MT-HCR", 0.984, 6.741e-4), ("MT-HCCAR", 0.985, 1.057e-3)],
            Direction::HigherBetter,
        );
        assert_eq!(one_se_select(&c, &order).unwrap(), "MT-HCR");
    }

    #[test]
    fn lower_better_no_model_inside() {
        let order = default_complexity_order();
        let c = cell(
            &[("MT-CR", 0.055, 2.9e-3), ("MT-HCR", 0.034, 5.97e-4), ("MT-HCCAR", 0.027, 4.91e-4)],
            Direction::LowerBetter,
        );
        assert_eq!(one_se_select(&c, &order).unwrap(), "MT-HCCAR");
    }

    #[test]
    fn identical_stats_pick_the_simpler() {
        let order = default_complexity_order();
        let c = cell(&[("MT-HCCAR", 0.5, 0.01), ("MT-HCR", 0.5, 0.01)], Direction::HigherBetter);
        assert_eq!(one_se_select(&c, &order).unwrap(), "MT-HCR");
    }

    #[test]
    fn resolution_widens_the_region() {
        let order = default_complexity_order();
        let c = cell(&[("MT-HCR", 0.986, 4.716e-4), ("MT-HCCAR", 0.987, 6.18e-4)], Direction::HigherBetter);
        assert_eq!(one_se_select(&c, &order).unwrap(), "MT-HCCAR");
        assert_eq!(one_se_select_with(&c, &order, 1e-3).unwrap(), "MT-HCR");
    }

    #[test]
    fn empty_and_mixed_cells() {
        let order = default_complexity_order();
        assert!(one_se_select(&[], &order).is_err());
        let mut c = cell(&[("MT-CR", 0.5, 0.0), ("MT-HCR", 0.6, 0.0)], Direction::HigherBetter);
        c[1].metric = "MSE".into();
        assert!(one_se_select(&c, &order).is_err());
    }

    #[test]
    fn missing_cells_are_listed() {
        let mut grid = Vec::new();
        for m in ["MT-CR", "MT-HCR"] {
            for d in ["OCI", "ABI"] {
                grid.push(FoldStats::from_summary(m, d, "MSE", Direction::LowerBetter, 0.1, 0.0).unwrap());
            }
        }
        grid.pop();
        match check_complete(&grid) {
            Err(Error::IncompleteGrid(cells)) => assert_eq!(cells, vec!["MT-HCR/ABI/MSE".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dominant_model_takes_every_cell() {
        let order = default_complexity_order();
        let mut grid = Vec::new();
        for d in ["OCI", "VIIRS", "ABI"] {
            for (x, dir) in [
                ("ACC_bi", Direction::HigherBetter),
                ("AUPRC_w", Direction::HigherBetter),
                ("MSE", Direction::LowerBetter),
                ("R2", Direction::HigherBetter),
            ] {
                for (m, mu) in [("MT-CR", 0.5), ("MT-HCR", 0.6), ("MT-HCCAR", 0.7)] {
                    let mu = if dir == Direction::LowerBetter { 1.0 - mu } else { mu };
                    grid.push(FoldStats::from_summary(m, d, x, dir, mu, 1e-6).unwrap());
                }
            }
        }
        let s = select(&grid, &order, &BTreeMap::new(), 0.0).unwrap();
        assert_eq!(s.p_1se_total["MT-HCCAR"], 12.0);
        assert_eq!(s.p_1se_total["MT-CR"], 0.0);
        assert_eq!(s.p_ab_total["MT-HCCAR"], 0.0);
        assert!(s.p_ab_total["MT-CR"] < 0.0);

        let w: BTreeMap<String, f64> = [("ACC_bi".to_string(), 2.0)].into();
        let s = select(&grid, &order, &w, 0.0).unwrap();
        assert_eq!(s.p_1se_total["MT-HCCAR"], 15.0);
    }

    #[test]
    fn zero_best_mean() {
        let order = default_complexity_order();
        let grid = cell(&[("MT-CR", 0.0, 0.0), ("MT-HCR", -1.0, 0.0)], Direction::HigherBetter);
        assert!(matches!(p_ab(&grid, &order), Err(Error::UndefinedMetric(_))));
    }

    proptest! {
        #[test]
        fn affine_rescaling_keeps_the_choice(
            folds in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 2..5),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let order = default_complexity_order();
            let names = ["MT-CR", "MT-HCR", "MT-HCCR", "MT-HCCAR"];
            let mk = |a: f64, b: f64| -> Vec<FoldStats> {
                folds.iter().zip(names).map(|(v, m)| {
                    let v: Vec<f64> = v.iter().map(|x| a * x + b).collect();
                    fold_stats(&v, m, "D", "R2", Direction::HigherBetter).unwrap()
                }).collect()
            };
            let base = one_se_select(&mk(1.0, 0.0), &order).unwrap();
            prop_assert_eq!(base, one_se_select(&mk(scale, shift), &order).unwrap());
        }

        #[test]
        fn psi_columns_sum_to_one(mus in prop::collection::vec((0.01f64..1.0, 0.0f64..0.05), 12)) {
            let order = default_complexity_order();
            let mut grid = Vec::new();
            for (i, (mu, se)) in mus.iter().enumerate() {
                let m = ["MT-CR", "MT-HCR", "MT-HCCAR"][i % 3];
                let d = ["A", "B"][(i / 3) % 2];
                let x = ["R2", "MSE"][i / 6];
                let dir = if x == "MSE" { Direction::LowerBetter } else { Direction::HigherBetter };
                grid.push(FoldStats::from_summary(m, d, x, dir, *mu, *se).unwrap());
            }
            let s = select(&grid, &order, &BTreeMap::new(), 0.0).unwrap();
            prop_assert_eq!(s.p_1se_total.values().sum::<f64>(), 4.0);
            for (d, x) in [("A", "R2"), ("B", "R2"), ("A", "MSE"), ("B", "MSE")] {
                let col: u8 = s.psi.values().map(|by_d| by_d[d][x]).sum();
                prop_assert_eq!(col, 1);
            }
            for by_d in s.p_ab_components.values() {
                for by_x in by_d.values() {
                    for v in by_x.values() {
                        prop_assert!(*v <= 0.0);
                    }
                }
            }
        }
    }
}
