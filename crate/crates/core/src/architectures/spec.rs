use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Model family members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "SEQ")]
    Seq,
    #[serde(rename = "MT-CR")]
    MtCr,
    #[serde(rename = "MT-HCR")]
    MtHcr,
    #[serde(rename = "MT-HCCR")]
    MtHccr,
    #[serde(rename = "MT-HCCAR")]
    MtHccar,
    #[serde(rename = "MLP-BASELINE")]
    MlpBaseline,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Seq,
        Variant::MtCr,
        Variant::MtHcr,
        Variant::MtHccr,
        Variant::MtHccar,
        Variant::MlpBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Seq => "SEQ",
            Self::MtCr => "MT-CR",
            Self::MtHcr => "MT-HCR",
            Self::MtHccr => "MT-HCCR",
            Self::MtHccar => "MT-HCCAR",
            Self::MlpBaseline => "MLP-BASELINE",
        }
    }

    /// `(hc, aux, attention)` flags this variant requires.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Self::Seq | Self::MtCr | Self::MlpBaseline => (false, false, false),
            Self::MtHcr => (true, false, false),
            Self::MtHccr => (true, true, false),
            Self::MtHccar => (true, true, true),
        }
    }

    /// Shared encoder with a reconstruction decoder.
    pub fn is_multitask(self) -> bool {
        matches!(self, Self::MtCr | Self::MtHcr | Self::MtHccr | Self::MtHccar)
    }

    /// Phase outputs are conditional on cloudiness (`P(liquid | cloudy)`)
    /// rather than joint class probabilities.
    pub fn phase_is_conditional(self) -> bool {
        matches!(self, Self::Seq | Self::MtHcr | Self::MtHccr | Self::MtHccar)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == up)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// How the phase branch is gated while training. Inference always uses the
/// thresholded cloud label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatingMode {
    /// Multiply by the predicted cloud probability (differentiable).
    #[default]
    Soft,
    /// Multiply by the 0/1 label obtained at the threshold.
    Hard,
}

/// Which tensor the cloud gate multiplies before the phase head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateOperand {
    /// The shared latent code.
    #[default]
    Latent,
    /// The standardized input features.
    Features,
}

/// Normalisation of the absolute-error regression loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegNormalization {
    /// Sum over cloudy pixels.
    #[default]
    Sum,
    /// Sum over cloudy pixels divided by the batch size.
    Mean,
}

/// Full description of one model; serialises as the architecture config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    pub input_dim: usize,
    /// Hidden widths between the input and the latent code.
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    /// Hidden widths of every head; the last one is the attention width.
    pub head_widths: Vec<usize>,
    /// Hidden width of the single-layer baseline.
    #[serde(default = "default_baseline_hidden")]
    pub baseline_hidden: usize,
    pub attention_enabled: bool,
    pub aux_enabled: bool,
    pub hc_enabled: bool,
    #[serde(default)]
    pub gating_mode: GatingMode,
    #[serde(default)]
    pub gate_operand: GateOperand,
    #[serde(default)]
    pub reg_normalization: RegNormalization,
    /// Thickness-bin edges on log10 COT.
    #[serde(default = "default_bins")]
    pub bins: [f64; 4],
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_baseline_hidden() -> usize {
    10
}

fn default_bins() -> [f64; 4] {
    [-1.5, 0.0, 1.0, 2.5]
}

fn default_threshold() -> f64 {
    0.5
}

impl ArchitectureSpec {
    /// Default widths: encoder M→128→64→32, heads 32→16→out.
    pub fn new(variant: Variant, input_dim: usize) -> Self {
        let (hc, aux, attn) = variant.flags();
        Self {
            variant,
            input_dim,
            encoder_widths: vec![128, 64],
            latent_dim: 32,
            head_widths: vec![16],
            baseline_hidden: default_baseline_hidden(),
            attention_enabled: attn,
            aux_enabled: aux,
            hc_enabled: hc,
            gating_mode: GatingMode::Soft,
            gate_operand: GateOperand::Latent,
            reg_normalization: RegNormalization::Sum,
            bins: default_bins(),
            threshold: default_threshold(),
        }
    }

    /// Same spec with different widths.
    pub fn with_widths(mut self, encoder: &[usize], latent: usize, head: &[usize]) -> Self {
        self.encoder_widths = encoder.to_vec();
        self.latent_dim = latent;
        self.head_widths = head.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.variant)));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        let (hc, aux, attn) = self.variant.flags();
        if (self.hc_enabled, self.aux_enabled, self.attention_enabled) != (hc, aux, attn) {
            return bad(format!(
                "flags (hc, aux, attention) = {:?} but the variant requires {:?}",
                (self.hc_enabled, self.aux_enabled, self.attention_enabled),
                (hc, aux, attn)
            ));
        }
        if self.variant == Variant::MlpBaseline {
            if self.baseline_hidden == 0 {
                return bad("baseline_hidden must be positive".into());
            }
        } else {
            let chain: Vec<usize> = self.encoder_widths.iter().copied().chain([self.latent_dim]).collect();
            if chain.contains(&0) {
                return bad("widths must be positive".into());
            }
            if !chain.windows(2).all(|w| w[0] > w[1]) {
                return bad(format!("encoder widths {chain:?} must strictly decrease"));
            }
            if self.head_widths.is_empty() || self.head_widths.contains(&0) {
                return bad("head_widths must be a nonempty list of positive widths".into());
            }
        }
        if !self.bins.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!("bin edges {:?} must increase", self.bins));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        Ok(())
    }

    /// Mirror of the encoder, used by the decoder.
    pub fn decoder_widths(&self) -> Vec<usize> {
        self.encoder_widths.iter().rev().copied().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Thickness classes on log10 COT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThicknessBin {
    Thin,
    Moderate,
    Thick,
}

impl ThicknessBin {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Bin edges `[e0, e1, e2, e3]` give `[e0, e1)`, `[e1, e2)`, `[e2, e3]`.
pub fn assign_thickness_bin_with(y_cot: f64, edges: &[f64; 4]) -> Result<ThicknessBin> {
    if !(y_cot >= edges[0] && y_cot <= edges[3]) {
        return Err(Error::Data(format!(
            "log COT {y_cot} outside [{}, {}]",
            edges[0], edges[3]
        )));
    }
    Ok(if y_cot < edges[1] {
        ThicknessBin::Thin
    } else if y_cot < edges[2] {
        ThicknessBin::Moderate
    } else {
        ThicknessBin::Thick
    })
}

/// Thin `[-1.5, 0)`, moderate `[0, 1)`, thick `[1, 2.5]`.
pub fn assign_thickness_bin(y_cot: f64) -> Result<ThicknessBin> {
    assign_thickness_bin_with(y_cot, &default_bins())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins() {
        assert_eq!(assign_thickness_bin(-0.5).unwrap(), ThicknessBin::Thin);
        assert_eq!(assign_thickness_bin(-1.5).unwrap(), ThicknessBin::Thin);
        assert_eq!(assign_thickness_bin(0.0).unwrap(), ThicknessBin::Moderate);
        assert_eq!(assign_thickness_bin(1.0).unwrap(), ThicknessBin::Thick);
        assert_eq!(assign_thickness_bin(2.5).unwrap(), ThicknessBin::Thick);
        assert!(matches!(assign_thickness_bin(2.6), Err(Error::Data(_))));
        assert!(assign_thickness_bin(f64::NAN).is_err());
    }

    #[test]
    fn default_specs_validate() {
        for v in Variant::ALL {
            ArchitectureSpec::new(v, 6).validate().unwrap();
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("mt-hccar".parse::<Variant>().is_ok());
        assert!("MT-XYZ".parse::<Variant>().is_err());
    }

    #[test]
    fn inconsistent_specs() {
        let mut s = ArchitectureSpec::new(Variant::MtHccr, 6);
        s.attention_enabled = true;
        assert!(s.validate().is_err());
        let s = ArchitectureSpec::new(Variant::MtHcr, 6).with_widths(&[16, 32], 8, &[4]);
        assert!(s.validate().is_err());
        let s = ArchitectureSpec::new(Variant::MtHcr, 6).with_widths(&[16], 16, &[4]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = ArchitectureSpec::new(Variant::MtHccar, 10);
        let back = ArchitectureSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["variant"], "MT-HCCAR");
        assert_eq!(v["gating_mode"], "soft");
    }
}
