//! Multi-task cloud property retrieval.
//!
//! A from-scratch reverse-mode engine for dense networks ([`gradcore`]) carries
//! a family of multi-task models ([`architectures`]) that jointly predict a
//! cloud mask, the cloud phase of cloudy pixels, and the base-10 logarithm of
//! cloud optical thickness (COT). Around the models sit a synthetic per-pixel
//! data generator for three sensor band layouts ([`datasynth`]), the
//! evaluation metrics ([`metrics`]) and K-fold / one-standard-error model
//! selection ([`selection`]). Trained models persist through [`checkpoint`].

pub mod architectures;
pub mod checkpoint;
pub mod datasynth;
mod error;
pub mod gradcore;
pub mod metrics;
pub mod selection;

pub use architectures::{ArchitectureSpec, GatingMode, LossBreakdown, Model, ModelOutputs, Predictions, Variant};
pub use checkpoint::Checkpoint;
pub use datasynth::{CloudLabel, PixelDataset, SensorConfig, SensorName, Standardizer, SurfaceType};
pub use error::{Error, Result};
pub use gradcore::{Matrix, ParamStore, TrainConfig};
pub use metrics::{EvalReport, FmgSpace};
pub use selection::{Direction, FoldStats, SelectionScores};
