//! Model checkpoints as a single JSON document.
//!
//! Parameter values are written with 17 significant digits, which is enough
//! for every `f64` to survive the round trip bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::architectures::{ArchitectureSpec, Model};
use crate::datasynth::Standardizer;
use crate::gradcore::{Matrix, TrainConfig};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(serialize_with = "full_precision")]
    pub values: Vec<f64>,
}

fn full_precision<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::Error as _;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(S::Error::custom(format!("non-finite parameter value {v}")));
    }
    let body: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    let raw = RawValue::from_string(format!("[{}]", body.join(","))).map_err(S::Error::custom)?;
    raw.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: ArchitectureSpec,
    pub config: TrainConfig,
    pub standardization: Standardizer,
    pub parameters: Vec<ParamRecord>,
}

impl Checkpoint {
    /// Snapshot a model; parameters in store order.
    pub fn capture(model: &Model, config: &TrainConfig, standardization: &Standardizer) -> Self {
        let parameters = model
            .stores()
            .iter()
            .flat_map(|s| s.iter())
            .map(|p| ParamRecord {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.data().to_vec(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            architecture: model.spec().clone(),
            config: config.clone(),
            standardization: standardization.clone(),
            parameters,
        }
    }

    /// Rebuild the model. Every parameter of the architecture must be present
    /// exactly once with its expected shape.
    pub fn restore(&self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.standardization.mean.len() != self.architecture.input_dim {
            return Err(Error::Config(format!(
                "standardization covers {} features, architecture expects {}",
                self.standardization.mean.len(),
                self.architecture.input_dim
            )));
        }
        let mut model = Model::new(self.architecture.clone(), 0)?;
        let expected = model.stores().iter().map(|s| s.len()).sum::<usize>();
        if expected != self.parameters.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, architecture has {expected}",
                self.parameters.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Config(format!("parameter {} appears twice", p.name)));
            }
            let value = Matrix::from_vec(p.rows, p.cols, p.values.clone())?;
            model.set_param(&p.name, value)?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
