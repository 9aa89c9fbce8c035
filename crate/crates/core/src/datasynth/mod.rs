//! Pixel datasets: schema, sensor band layouts, CSV ingestion, seeded
//! splits and folds, and a synthetic stand-in for radiative-transfer
//! simulations.

mod csvio;
mod dataset;
mod generate;
mod sensors;
mod split;
mod standardize;

pub use csvio::{load_csv, read_csv, save_csv, write_csv};
pub use dataset::{CloudLabel, Pixel, PixelDataset, SurfaceType, FEATURES_WITHOUT_BANDS};
pub use generate::{clean_reflectance, generate_dataset, Priors};
pub use sensors::{sensor_band_config, SensorConfig, SensorName};
pub use split::{kfold_indices, split, Split, SplitPlan};
pub use standardize::Standardizer;
