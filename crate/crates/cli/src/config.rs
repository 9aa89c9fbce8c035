//! Experiment configuration: a JSON file, overridden by flags, resolved
//! into the exact settings a command runs with.

use std::path::{Path, PathBuf};

use cloudret_core::architectures::{ArchitectureSpec, GateOperand, GatingMode, RegNormalization, Variant};
use cloudret_core::datasynth::{generate_dataset, load_csv, sensor_band_config, Priors, SensorName, SplitPlan};
use cloudret_core::gradcore::TrainConfig;
use cloudret_core::metrics::FmgSpace;
use cloudret_core::{Error, PixelDataset, Result};
use serde::{Deserialize, Serialize};

/// Layer sizes and head options shared by every variant of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureOptions {
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    pub head_widths: Vec<usize>,
    pub baseline_hidden: usize,
    pub gating_mode: GatingMode,
    pub gate_operand: GateOperand,
    pub reg_normalization: RegNormalization,
    pub threshold: f64,
}

impl Default for ArchitectureOptions {
    fn default() -> Self {
        let d = ArchitectureSpec::new(Variant::MtHccar, 1);
        Self {
            encoder_widths: d.encoder_widths,
            latent_dim: d.latent_dim,
            head_widths: d.head_widths,
            baseline_hidden: d.baseline_hidden,
            gating_mode: d.gating_mode,
            gate_operand: d.gate_operand,
            reg_normalization: d.reg_normalization,
            threshold: d.threshold,
        }
    }
}

impl ArchitectureOptions {
    pub fn spec(&self, variant: Variant, input_dim: usize) -> Result<ArchitectureSpec> {
        let mut spec = ArchitectureSpec::new(variant, input_dim).with_widths(
            &self.encoder_widths,
            self.latent_dim,
            &self.head_widths,
        );
        spec.baseline_hidden = self.baseline_hidden;
        spec.gating_mode = self.gating_mode;
        spec.gate_operand = self.gate_operand;
        spec.reg_normalization = self.reg_normalization;
        spec.threshold = self.threshold;
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything a command needs. The master `seed` is authoritative: the
/// split, initialisation and shuffling seeds are derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sensor: SensorName,
    /// Dataset CSV; when absent a synthetic set is generated.
    pub data: Option<PathBuf>,
    pub n: usize,
    pub noise_sd: f64,
    pub priors: Priors,
    pub variant: Variant,
    pub variants: Vec<Variant>,
    pub architecture: ArchitectureOptions,
    pub train: TrainConfig,
    pub split: SplitPlan,
    pub kfold_k: usize,
    pub fmg_space: FmgSpace,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sensor: SensorName::Abi,
            data: None,
            n: 2000,
            noise_sd: 0.01,
            priors: Priors::default(),
            variant: Variant::MtHccar,
            variants: Variant::ALL.to_vec(),
            architecture: ArchitectureOptions::default(),
            train: TrainConfig::default(),
            split: SplitPlan::default(),
            kfold_k: 10,
            fmg_space: FmgSpace::Log,
        }
    }
}

/// Seed streams derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 0,
    Split = 1,
    Init = 2,
    Shuffle = 3,
}

/// SplitMix64 finaliser over `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    let mut z = seed ^ (stream as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fill in derived seeds and check the settings.
    pub fn resolve(mut self) -> Result<Self> {
        self.split.seed = derive_seed(self.seed, Stream::Split);
        self.train.seed = derive_seed(self.seed, Stream::Shuffle);
        self.split.validate()?;
        self.train.validate()?;
        self.priors.validate()?;
        if self.variants.is_empty() {
            return Err(Error::Config("variant list is empty".into()));
        }
        if self.data.is_none() && self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Init)
    }

    /// Load the configured CSV or generate the synthetic set.
    pub fn dataset(&self) -> Result<PixelDataset> {
        match &self.data {
            Some(path) => load_csv(path, Some(self.sensor)),
            None => generate_dataset(
                self.n,
                &sensor_band_config(self.sensor),
                self.priors,
                self.noise_sd,
                derive_seed(self.seed, Stream::Data),
            ),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
