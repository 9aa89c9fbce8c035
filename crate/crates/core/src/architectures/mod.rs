//! The model family: a shared encoder–decoder with hierarchical cloud
//! mask / phase heads, an auxiliary thickness classifier and a
//! cross-attention regression head, plus the SEQ and single-layer baselines.
//!
//! | variant      | mask→phase gating | aux bins | attention |
//! |--------------|-------------------|----------|-----------|
//! | SEQ          | three networks    |          |           |
//! | MT-CR        | flat              |          |           |
//! | MT-HCR       | yes               |          |           |
//! | MT-HCCR      | yes               | yes      |           |
//! | MT-HCCAR     | yes               | yes      | yes       |
//! | MLP-BASELINE | flat              |          |           |

mod attention;
mod loss;
mod model;
mod predict;
mod spec;
mod train;

pub use attention::cross_attention;
pub use loss::{compute_loss, LossBreakdown};
pub use model::{build_model, Model, ModelOutputs};
pub use predict::{class_scores, decide, Predictions};
pub use spec::{
    assign_thickness_bin, assign_thickness_bin_with, ArchitectureSpec, GateOperand, GatingMode, RegNormalization,
    ThicknessBin, Variant,
};
pub use train::{mean_loss, train, write_history_csv, HistoryRow, TrainData, HISTORY_COLUMNS};
