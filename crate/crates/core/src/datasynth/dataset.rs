use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SensorConfig;
use crate::gradcore::Matrix;
use crate::{Error, Result};

/// Three ancillary scalars, four surface one-hot columns and three angles.
pub const FEATURES_WITHOUT_BANDS: usize = 10;

pub const COT_MIN: f64 = -1.5;
pub const COT_MAX: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceType {
    Land,
    Snow,
    Desert,
    Ocean,
}

impl SurfaceType {
    pub const ALL: [SurfaceType; 4] = [
        SurfaceType::Land,
        SurfaceType::Snow,
        SurfaceType::Desert,
        SurfaceType::Ocean,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceType::Land => "land",
            SurfaceType::Snow => "snow",
            SurfaceType::Desert => "desert",
            SurfaceType::Ocean => "ocean",
        }
    }
}

impl FromStr for SurfaceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SurfaceType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown surface type `{s}`"))
    }
}

/// Hierarchical cloud label: clear, or cloudy with a phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudLabel {
    Clear,
    Liquid,
    Ice,
}

impl CloudLabel {
    pub fn is_cloudy(self) -> bool {
        self != CloudLabel::Clear
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CloudLabel::Clear => "clear",
            CloudLabel::Liquid => "liquid",
            CloudLabel::Ice => "ice",
        }
    }
}

impl fmt::Display for CloudLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CloudLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "clear" => Ok(CloudLabel::Clear),
            "liquid" => Ok(CloudLabel::Liquid),
            "ice" => Ok(CloudLabel::Ice),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub pixel_id: u64,
    pub surface_pressure_mbar: f64,
    pub water_vapor_mm: f64,
    pub ozone_du: f64,
    pub surface_type: SurfaceType,
    pub view_zenith_deg: f64,
    pub solar_zenith_deg: f64,
    pub rel_azimuth_deg: f64,
    pub reflectances: Vec<f64>,
    pub label: CloudLabel,
    /// log10 COT; present exactly for cloudy pixels.
    pub cot_log10: Option<f64>,
}

impl Pixel {
    /// Feature row: pressure, water vapour, ozone, surface one-hot, the three
    /// angles, then the reflectances.
    pub fn features(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(FEATURES_WITHOUT_BANDS + self.reflectances.len());
        row.extend([self.surface_pressure_mbar, self.water_vapor_mm, self.ozone_du]);
        let mut onehot = [0.0; 4];
        onehot[self.surface_type.index()] = 1.0;
        row.extend(onehot);
        row.extend([self.view_zenith_deg, self.solar_zenith_deg, self.rel_azimuth_deg]);
        row.extend_from_slice(&self.reflectances);
        row
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelDataset {
    pub sensor: SensorConfig,
    pub pixels: Vec<Pixel>,
}

impl PixelDataset {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Feature dimension `M = 10 + bands`.
    pub fn feature_dim(&self) -> usize {
        FEATURES_WITHOUT_BANDS + self.sensor.band_count()
    }

    /// Raw (unstandardized) `n x M` feature matrix.
    pub fn features(&self) -> Matrix {
        let m = self.feature_dim();
        let mut data = Vec::with_capacity(self.len() * m);
        for p in &self.pixels {
            data.extend(p.features());
        }
        Matrix::from_vec(self.len(), m, data).expect("validated pixels have uniform width")
    }

    pub fn labels(&self) -> Vec<CloudLabel> {
        self.pixels.iter().map(|p| p.label).collect()
    }

    pub fn cot(&self) -> Vec<Option<f64>> {
        self.pixels.iter().map(|p| p.cot_log10).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> PixelDataset {
        PixelDataset {
            sensor: self.sensor.clone(),
            pixels: indices.iter().map(|&i| self.pixels[i].clone()).collect(),
        }
    }

    pub fn label_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for p in &self.pixels {
            counts[p.label as usize] += 1;
        }
        counts
    }

    /// Check every per-pixel invariant; the error names the first offending row
    /// (1-based, as in a data file without its header).
    pub fn validate(&self) -> Result<()> {
        let bands = self.sensor.band_count();
        for (i, p) in self.pixels.iter().enumerate() {
            let row = i + 1;
            let fail = |detail: String| Err(Error::Parse { row, detail });
            if p.reflectances.len() != bands {
                return fail(format!(
                    "{} reflectances, {} expects {bands}",
                    p.reflectances.len(),
                    self.sensor.name
                ));
            }
            for (name, v) in [
                ("surface_pressure_mbar", p.surface_pressure_mbar),
                ("water_vapor_mm", p.water_vapor_mm),
                ("ozone_du", p.ozone_du),
            ] {
                if !(v > 0.0) || !v.is_finite() {
                    return fail(format!("{name} must be positive, got {v}"));
                }
            }
            for (name, v, hi) in [
                ("view_zenith_deg", p.view_zenith_deg, 90.0),
                ("solar_zenith_deg", p.solar_zenith_deg, 90.0),
                ("rel_azimuth_deg", p.rel_azimuth_deg, 180.0),
            ] {
                if !(0.0..=hi).contains(&v) {
                    return fail(format!("{name} = {v} outside [0, {hi}]"));
                }
            }
            if let Some(r) = p.reflectances.iter().find(|r| !(0.0..=1.5).contains(*r)) {
                return fail(format!("reflectance {r} outside [0, 1.5]"));
            }
            match (p.label.is_cloudy(), p.cot_log10) {
                (false, Some(_)) => return fail("cot_log10 present on a clear pixel".into()),
                (true, None) => return fail("cot_log10 missing on a cloudy pixel".into()),
                (true, Some(c)) if !(COT_MIN..=COT_MAX).contains(&c) => {
                    return fail(format!("cot_log10 {c} outside [{COT_MIN}, {COT_MAX}]"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
