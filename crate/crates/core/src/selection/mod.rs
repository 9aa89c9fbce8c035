//! K-fold statistics and model selection by the one-standard-error rule,
//! with absolute (`p_ab`) and 1SE (`p_1se`) aggregate scores.

mod grid;
mod scores;
mod stats;

pub use grid::{load_grid, read_grid, render_table, save_grid, write_grid};
pub use scores::{
    check_complete, group_cells, one_se_select, one_se_select_with, p_1se, p_ab, select, CellMap,
    SelectionScores,
};
pub use stats::{fold_stats, Direction, FoldStats};

use crate::metrics::EvalReport;

pub const METRIC_ACC: &str = "ACC_bi";
pub const METRIC_AUPRC: &str = "AUPRC_w";
pub const METRIC_MSE: &str = "MSE";
pub const METRIC_R2: &str = "R2";

/// The four selection metrics with their directions.
pub const SELECTION_METRICS: [(&str, Direction); 4] = [
    (METRIC_ACC, Direction::HigherBetter),
    (METRIC_AUPRC, Direction::HigherBetter),
    (METRIC_MSE, Direction::LowerBetter),
    (METRIC_R2, Direction::HigherBetter),
];

/// Multi-task variants from least to most complex.
pub fn default_complexity_order() -> Vec<String> {
    ["MT-CR", "MT-HCR", "MT-HCCR", "MT-HCCAR"].map(String::from).to_vec()
}

/// The selection metrics read off one evaluation report, in
/// [`SELECTION_METRICS`] order; undefined metrics are `None`.
pub fn selection_values(report: &EvalReport) -> [Option<f64>; 4] {
    [
        Some(report.acc_bi),
        report.auprc_weighted,
        report.mse_all,
        report.r2_all,
    ]
}
