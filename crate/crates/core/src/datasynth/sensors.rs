use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SensorName {
    Oci,
    Viirs,
    Abi,
}

impl SensorName {
    pub const ALL: [SensorName; 3] = [SensorName::Oci, SensorName::Viirs, SensorName::Abi];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorName::Oci => "OCI",
            SensorName::Viirs => "VIIRS",
            SensorName::Abi => "ABI",
        }
    }
}

impl fmt::Display for SensorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OCI" => Ok(SensorName::Oci),
            "VIIRS" => Ok(SensorName::Viirs),
            "ABI" => Ok(SensorName::Abi),
            _ => Err(Error::Config(format!(
                "unknown sensor `{s}` (expected OCI, VIIRS or ABI)"
            ))),
        }
    }
}

/// Reflectance band centres of one sensor, in nanometres, ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub name: SensorName,
    pub band_centers_nm: Vec<f64>,
}

impl SensorConfig {
    pub fn band_count(&self) -> usize {
        self.band_centers_nm.len()
    }
}

const OCI_SWIR: [f64; 7] = [940.0, 1040.0, 1250.0, 1378.0, 1620.0, 2130.0, 2260.0];
const VIIRS: [f64; 10] = [
    412.0, 445.0, 488.0, 555.0, 672.0, 865.0, 1240.0, 1380.0, 1610.0, 2250.0,
];
const ABI: [f64; 6] = [471.0, 640.0, 860.0, 1370.0, 1600.0, 2200.0];

/// OCI: 226 hyperspectral bands every 2.5 nm from 350 nm plus seven
/// NIR/SWIR bands; VIIRS: 10 bands; ABI: 6 bands.
pub fn sensor_band_config(name: SensorName) -> SensorConfig {
    let band_centers_nm = match name {
        SensorName::Oci => (0..226)
            .map(|i| 350.0 + 2.5 * f64::from(i))
            .chain(OCI_SWIR)
            .collect(),
        SensorName::Viirs => VIIRS.to_vec(),
        SensorName::Abi => ABI.to_vec(),
    };
    SensorConfig {
        name,
        band_centers_nm,
    }
}
