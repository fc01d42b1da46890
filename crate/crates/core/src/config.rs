//! Whole-pipeline configuration, loadable from JSON with a default for every
//! field. Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{EncoderKind, Gabor2dParams, LogGaborParams};
use crate::error::PathIoError;
use crate::matching::MatchConfig;
use crate::nnseg::NetworkConfig;
use crate::normalize::{DEFAULT_COLS, DEFAULT_ROWS};
use crate::quality::QualityConfig;
use crate::segment::SegmentConfig;
use crate::synth::{AugmentParams, CorpusConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] PathIoError),
    #[error("configuration parse: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    Infant,
    AdultLegacy,
    Nn,
}

impl std::str::FromStr for SegmenterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "infant" => Ok(SegmenterKind::Infant),
            "adult_legacy" => Ok(SegmenterKind::AdultLegacy),
            "nn" => Ok(SegmenterKind::Nn),
            other => Err(format!("unknown segmentation mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSegConfig {
    pub network: NetworkConfig,
    /// Weight file; required when the segmenter is `nn`.
    pub weights_path: Option<String>,
    /// Probability above which a pixel counts as iris.
    pub threshold: f64,
}

impl Default for NnSegConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            weights_path: None,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub loggabor: LogGaborParams,
    pub gabor2d: Gabor2dParams,
    /// Kernel-bank file. Without one, a random zero-mean bank is drawn.
    pub bank_path: Option<String>,
    pub random_bank_count: usize,
    pub random_bank_size: usize,
    pub random_bank_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Loggabor1d,
            loggabor: LogGaborParams::default(),
            gabor2d: Gabor2dParams::default(),
            bank_path: None,
            random_bank_count: 8,
            random_bank_size: 9,
            random_bank_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub augment: AugmentParams,
    pub segmenter: SegmenterKind,
    pub segment: SegmentConfig,
    pub nn: NnSegConfig,
    pub normalization: NormalizationConfig,
    pub encoder: EncoderConfig,
    pub matching: MatchConfig,
    pub quality: QualityConfig,
    /// Entries with sharpness below this are dropped by curation.
    pub curation_threshold: f64,
    /// Synthetic codes scoring below this against any authentic code are
    /// removed by the leakage filter.
    pub leak_threshold: f64,
    pub lower_is_genuine: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            augment: AugmentParams::default(),
            segmenter: SegmenterKind::Infant,
            segment: SegmentConfig::default(),
            nn: NnSegConfig::default(),
            normalization: NormalizationConfig::default(),
            encoder: EncoderConfig::default(),
            matching: MatchConfig::default(),
            quality: QualityConfig::default(),
            curation_threshold: 10.0,
            leak_threshold: 0.5,
            lower_is_genuine: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PathIoError::new(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.normalization.rows == 0 || self.normalization.cols == 0 {
            return bad("normalization grid must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.matching.min_usable_fraction) {
            return bad("matching.min_usable_fraction must be in [0, 1]");
        }
        if self.augment.lo > self.augment.hi {
            return bad("augment.lo exceeds augment.hi");
        }
        if !(0.0..=180.0).contains(&self.augment.max_rotation_deg) {
            return bad("augment.max_rotation_deg must be in [0, 180]");
        }
        if self.encoder.loggabor.wavelength <= 0.0 || self.encoder.loggabor.sigma_on_f <= 0.0 {
            return bad("log-Gabor parameters must be positive");
        }
        if self.encoder.random_bank_count == 0 || self.encoder.random_bank_size.is_multiple_of(2) {
            return bad("random bank needs at least one odd-sized kernel");
        }
        if self.quality.sharpness_s0 <= 0.0 || self.quality.contrast_full_scale <= 0.0 {
            return bad("quality scale constants must be positive");
        }
        if !(0.0..=1.0).contains(&self.nn.threshold) {
            return bad("nn.threshold must be in [0, 1]");
        }
        self.nn.network.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
