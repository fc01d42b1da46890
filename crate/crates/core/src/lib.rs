//! Infant-aware iris recognition.
//!
//! The crate covers the full chain from a synthetic, ground-truthed eye
//! corpus to biometric error rates:
//!
//! - [`synth`]: procedural eye renderer, corpus manifests, infant augmentation
//! - [`segment`]: polarity-agnostic circular boundary search and occlusion masks
//! - [`nnseg`]: nested U-Net inference with shared atrous convolutions
//! - [`normalize`]: rubber-sheet unwrapping to a fixed polar grid
//! - [`encode`]: log-Gabor, 2D Gabor and kernel-bank iris codes
//! - [`matching`]: masked fractional Hamming distance and the leakage filter
//! - [`quality`]: image quality metrics and sharpness curation
//! - [`eval`]: all-pairs protocol, d′, EER, AUC, ROC, FTM
//!
//! [`pipeline`] wires the stages together; [`config::PipelineConfig`] holds
//! every tunable.

pub mod config;
pub mod encode;
pub mod error;
pub mod eval;
pub mod imagecore;
pub mod matching;
pub mod nnseg;
pub mod normalize;
pub mod pipeline;
pub mod quality;
pub mod segment;
pub mod synth;

pub use config::{PipelineConfig, SegmenterKind};
pub use encode::{Encoder, EncoderKind, FilterBank, IrisCode};
pub use error::{Error, FormatError, Result};
pub use eval::{EvalReport, ScoreSet};
pub use imagecore::{Circle, FloatImage, GrayImage, MaskImage};
pub use matching::{MatchConfig, MatchOutcome, PairKind, ScoreRow};
pub use normalize::NormalizedIris;
pub use quality::{QualityConfig, QualityReport};
pub use segment::{SegResult, SegmentConfig, SegmentMode};
pub use synth::{CorpusConfig, CorpusManifest, EyeAnnotation, EyeSpec, PupilPolarity};
