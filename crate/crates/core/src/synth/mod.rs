//! Procedural, seeded eye-image synthesis with ground truth.
//!
//! An identity is a seeded iris texture defined in rubber-sheet coordinates,
//! so it follows pupil dilation and eye rotation the way real iris tissue
//! does. Sessions perturb rotation, dilation, position, blur and sensor noise.

mod augment;
mod corpus;
mod render;
mod texture;

pub use augment::{augment_infant, AugmentParams};
pub use corpus::{
    generate_corpus, load_annotation, render_corpus, save_annotation, AnnotationFile, CorpusConfig,
    CorpusManifest, EyeLabel, ManifestEntry, RenderedSample, MANIFEST_VERSION,
};
pub use render::render_eye;
pub use texture::IrisTexture;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{Circle, MaskImage};
use crate::segment::SegResult;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid eye spec: {0}")]
pub struct SpecError(pub String);

/// Bright pupils come from retinal retro-reflection, common in infant NIR
/// captures; dark pupils are the adult norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PupilPolarity {
    BrightPupil,
    DarkPupil,
}

impl std::str::FromStr for PupilPolarity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bright_pupil" => Ok(PupilPolarity::BrightPupil),
            "dark_pupil" => Ok(PupilPolarity::DarkPupil),
            other => Err(format!("unknown polarity {other:?}")),
        }
    }
}

/// Per-session perturbation envelope, applied from `session_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionVariation {
    /// Eye rotation drawn from ±this many degrees.
    pub rotation_deg: f64,
    /// Added to `pupil_to_iris_ratio`, drawn from ±this.
    pub ratio_jitter: f64,
    /// Additive Gaussian sensor noise, gray levels.
    pub noise_sigma: f64,
    /// Eye centre offset from the canvas centre, ±px per axis.
    pub center_jitter: f64,
    /// Iris radius jitter, ±px.
    pub radius_jitter: f64,
    /// Eyelid coverage jitter, ±fraction.
    pub eyelid_jitter: f64,
}

impl Default for SessionVariation {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            ratio_jitter: 0.08,
            noise_sigma: 4.0,
            center_jitter: 20.0,
            radius_jitter: 3.0,
            eyelid_jitter: 0.05,
        }
    }
}

impl SessionVariation {
    /// No perturbation at all: renders are fully determined by the `EyeSpec`.
    pub fn none() -> Self {
        Self {
            rotation_deg: 0.0,
            ratio_jitter: 0.0,
            noise_sigma: 0.0,
            center_jitter: 0.0,
            radius_jitter: 0.0,
            eyelid_jitter: 0.0,
        }
    }
}

/// Everything needed to render one eye image deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EyeSpec {
    pub identity_seed: u64,
    pub session_seed: u64,
    pub polarity: PupilPolarity,
    /// Iris radius in pixels before session jitter.
    pub iris_radius: f64,
    pub pupil_to_iris_ratio: f64,
    /// Fraction of the iris diameter hidden by the eyelids (60% upper, 40%
    /// lower).
    pub eyelid_coverage: f64,
    pub highlight_count: u32,
    pub blur_sigma: f64,
    /// `[width, height]`.
    pub canvas: [usize; 2],
    #[serde(default)]
    pub variation: SessionVariation,
}

impl EyeSpec {
    /// A 640×480 eye with default session variation.
    pub fn new(identity_seed: u64, session_seed: u64, polarity: PupilPolarity) -> Self {
        Self {
            identity_seed,
            session_seed,
            polarity,
            iris_radius: 110.0,
            pupil_to_iris_ratio: match polarity {
                PupilPolarity::BrightPupil => 0.5,
                PupilPolarity::DarkPupil => 0.38,
            },
            eyelid_coverage: 0.15,
            highlight_count: 2,
            blur_sigma: 1.0,
            canvas: [640, 480],
            variation: SessionVariation::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let v = &self.variation;
        let err = |m: String| Err(SpecError(m));
        if !(self.pupil_to_iris_ratio > 0.1 && self.pupil_to_iris_ratio < 0.9) {
            return err(format!("pupil_to_iris_ratio {} outside (0.1, 0.9)", self.pupil_to_iris_ratio));
        }
        let lo = self.pupil_to_iris_ratio - v.ratio_jitter;
        let hi = self.pupil_to_iris_ratio + v.ratio_jitter;
        if lo <= 0.1 || hi >= 0.9 {
            return err(format!("jittered pupil ratio range [{lo}, {hi}] leaves (0.1, 0.9)"));
        }
        if !(0.0..=0.4).contains(&self.eyelid_coverage) {
            return err(format!("eyelid_coverage {} outside [0, 0.4]", self.eyelid_coverage));
        }
        if !(0.0..).contains(&self.blur_sigma) || !(0.0..).contains(&v.noise_sigma) {
            return err("blur and noise must be non-negative".into());
        }
        if v.rotation_deg.abs() > 180.0 || v.ratio_jitter < 0.0 || v.center_jitter < 0.0
            || v.radius_jitter < 0.0 || v.eyelid_jitter < 0.0
        {
            return err("invalid session variation".into());
        }
        if self.iris_radius - v.radius_jitter < 8.0 {
            return err(format!("iris radius {} too small", self.iris_radius));
        }
        let [w, h] = self.canvas;
        let reach = self.iris_radius + v.radius_jitter + v.center_jitter + 10.0;
        if 2.0 * reach > w as f64 || 2.0 * reach > h as f64 {
            return err(format!(
                "iris (radius {} with jitter) does not fit a {w}x{h} canvas with a 10 px margin",
                self.iris_radius
            ));
        }
        Ok(())
    }
}

/// Ground truth for one rendered eye.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeAnnotation {
    pub pupil: Circle,
    pub iris: Circle,
    /// Set bits mark usable iris pixels.
    pub occlusion: MaskImage,
}

impl EyeAnnotation {
    pub fn to_seg(&self) -> SegResult {
        SegResult {
            pupil: self.pupil,
            iris: self.iris,
            mask: self.occlusion.clone(),
            confidence: 1.0,
        }
    }

    pub fn from_seg(seg: &SegResult) -> Self {
        Self {
            pupil: seg.pupil,
            iris: seg.iris,
            occlusion: seg.mask.clone(),
        }
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_valid() {
        EyeSpec::new(1, 2, PupilPolarity::BrightPupil).validate().unwrap();
        EyeSpec::new(1, 2, PupilPolarity::DarkPupil).validate().unwrap();
    }

    #[test]
    fn spec_violations() {
        let base = EyeSpec::new(1, 2, PupilPolarity::DarkPupil);
        let mut s = base.clone();
        s.pupil_to_iris_ratio = 0.95;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.eyelid_coverage = 0.5;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.iris_radius = 230.0;
        assert!(s.validate().is_err());
        let mut s = base;
        s.blur_sigma = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn seed_mixing_spreads() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(0, 1), mix_seed(1, 0));
    }
}
