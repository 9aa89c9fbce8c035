//! Synthetic per-pixel reflectances.
//!
//! A cheap closed-form stand-in for radiative-transfer simulation. For band
//! centre `λ` (nm), airmass `m = 1/cos(sza) + 1/cos(vza)` and a per-pixel
//! surface brightness factor `s ∈ [0.8, 1.2]`:
//!
//! ```text
//! surface  a(λ)  land   0.06 + 0.29 σ((λ-710)/20) - 0.15 σ((λ-1800)/200)
//!                snow   0.95 exp(-((λ-400)/900)²)
//!                desert 0.15 + 0.30 (1 - exp(-(λ-400)/500))
//!                ocean  0.02 + 0.04 exp(-(λ-400)/120)           (times s)
//! gases    t(λ,f) = exp(-m [f·W/20·k_wv(λ) + O/300·k_o3(λ) + 0.009 (550/λ)⁴ P/1013])
//!          k_wv = 3.0 g(λ;1380,40) + 0.3 g(λ;940,30) + 0.1 g(λ;1130,40)
//!          k_o3 = 0.06 g(λ;600,70),   g(λ;c,w) = exp(-((λ-c)/w)²)
//! path     ρ_R = 0.03 (450/λ)⁴ (P/1013) / cos(sza) · (1 + 0.3 cos(raa) sin(vza))
//! cloud    R_c = R_max(λ,phase) · σ(1.8 (τ - 0.4)) · (0.9 + 0.2 cos(sza))
//!          R_max liquid = 0.9 - 0.25 g(λ;1600,150) - 0.45 g(λ;2200,200)
//!          R_max ice    = 0.9 - 0.50 g(λ;1600,150) - 0.65 g(λ;2200,200)
//! clear    R = ρ_R + t(λ,1) a
//! cloudy   R = ρ_R + t(λ,f) [R_c + (1-R_c)² a t(λ,1-f) / (1 - a R_c)]
//!          f = 0.5 for liquid (low cloud), 0.02 for ice (high cloud)
//! ```
//!
//! with `τ = log10 COT`, then Gaussian noise and clipping to `[0, 1.5]`.
//! Brightness rises monotonically with `τ`; ice is darker than liquid near
//! 1.6 and 2.2 µm and, sitting above the water vapour, brighter near 1.38 µm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{COT_MAX, COT_MIN};
use super::{CloudLabel, Pixel, PixelDataset, SensorConfig, SurfaceType};
use crate::{Error, Result};

/// Class priors for the generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub clear: f64,
    pub liquid: f64,
    pub ice: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            clear: 0.4,
            liquid: 0.3,
            ice: 0.3,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [self.clear, self.liquid, self.ice];
        if all.iter().any(|p| !(*p >= 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "priors must be non-negative and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> CloudLabel {
        let u: f64 = rng.random();
        if u < self.clear {
            CloudLabel::Clear
        } else if u < self.clear + self.liquid {
            CloudLabel::Liquid
        } else {
            CloudLabel::Ice
        }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn bump(lambda: f64, center: f64, width: f64) -> f64 {
    (-((lambda - center) / width).powi(2)).exp()
}

fn surface_albedo(kind: SurfaceType, lambda: f64) -> f64 {
    match kind {
        SurfaceType::Land => {
            0.06 + 0.29 * logistic((lambda - 710.0) / 20.0) - 0.15 * logistic((lambda - 1800.0) / 200.0)
        }
        SurfaceType::Snow => 0.95 * (-((lambda - 400.0) / 900.0).powi(2)).exp(),
        SurfaceType::Desert => 0.15 + 0.30 * (1.0 - (-(lambda - 400.0) / 500.0).exp()),
        SurfaceType::Ocean => 0.02 + 0.04 * (-(lambda - 400.0) / 120.0).exp(),
    }
}

/// Noise-free reflectance of one band for the given pixel state.
/// `albedo_scale` is the per-pixel surface brightness factor.
pub fn clean_reflectance(pixel: &Pixel, albedo_scale: f64, lambda: f64) -> f64 {
    let mu0 = pixel.solar_zenith_deg.to_radians().cos();
    let mu = pixel.view_zenith_deg.to_radians().cos();
    let airmass = 1.0 / mu0 + 1.0 / mu;
    let pressure = pixel.surface_pressure_mbar / 1013.0;

    let k_wv = 3.0 * bump(lambda, 1380.0, 40.0) + 0.3 * bump(lambda, 940.0, 30.0) + 0.1 * bump(lambda, 1130.0, 40.0);
    let k_o3 = 0.06 * bump(lambda, 600.0, 70.0);
    let rayleigh_tau = 0.009 * (550.0 / lambda).powi(4) * pressure;
    let trans = |wv_fraction: f64| {
        (-airmass * (wv_fraction * pixel.water_vapor_mm / 20.0 * k_wv + pixel.ozone_du / 300.0 * k_o3 + rayleigh_tau))
            .exp()
    };
    let path = 0.03 * (450.0 / lambda).powi(4) * pressure / mu0
        * (1.0 + 0.3 * pixel.rel_azimuth_deg.to_radians().cos() * pixel.view_zenith_deg.to_radians().sin());
    let albedo = surface_albedo(pixel.surface_type, lambda) * albedo_scale;

    match (pixel.label, pixel.cot_log10) {
        (CloudLabel::Clear, _) | (_, None) => path + trans(1.0) * albedo,
        (phase, Some(tau)) => {
            let (r_max, above) = match phase {
                CloudLabel::Ice => (
                    0.9 - 0.50 * bump(lambda, 1600.0, 150.0) - 0.65 * bump(lambda, 2200.0, 200.0),
                    0.02,
                ),
                _ => (
                    0.9 - 0.25 * bump(lambda, 1600.0, 150.0) - 0.45 * bump(lambda, 2200.0, 200.0),
                    0.5,
                ),
            };
            let rc = r_max * logistic(1.8 * (tau - 0.4)) * (0.9 + 0.2 * mu0);
            let below = (1.0 - rc).powi(2) * albedo * trans(1.0 - above) / (1.0 - albedo * rc);
            path + trans(above) * (rc + below)
        }
    }
}

/// Draw `n` pixels for `sensor`. Fully determined by the arguments.
pub fn generate_dataset(
    n: usize,
    sensor: &SensorConfig,
    priors: Priors,
    noise_sd: f64,
    seed: u64,
) -> Result<PixelDataset> {
    priors.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::Config(format!("noise_sd {noise_sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n);
    for i in 0..n {
        let label = priors.sample(&mut rng);
        let cot = rng.random_range(COT_MIN..=COT_MAX);
        let mut pixel = Pixel {
            pixel_id: i as u64,
            surface_pressure_mbar: rng.random_range(600.0..1050.0),
            water_vapor_mm: rng.random_range(2.0..60.0),
            ozone_du: rng.random_range(220.0..450.0),
            surface_type: SurfaceType::ALL[rng.random_range(0..4)],
            view_zenith_deg: rng.random_range(0.0..65.0),
            solar_zenith_deg: rng.random_range(0.0..70.0),
            rel_azimuth_deg: rng.random_range(0.0..=180.0),
            reflectances: Vec::with_capacity(sensor.band_count()),
            label,
            cot_log10: label.is_cloudy().then_some(cot),
        };
        let albedo_scale = rng.random_range(0.8..1.2);
        for &lambda in &sensor.band_centers_nm {
            let clean = clean_reflectance(&pixel, albedo_scale, lambda);
            let r = clean + noise.sample(&mut rng);
            pixel.reflectances.push(r.clamp(0.0, 1.5));
        }
        pixels.push(pixel);
    }
    Ok(PixelDataset {
        sensor: sensor.clone(),
        pixels,
    })
}
