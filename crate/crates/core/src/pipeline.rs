//! In-memory composition of the stages: render or load, segment, normalize,
//! encode, match all pairs, evaluate.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{EncoderConfig, PipelineConfig, SegmenterKind};
use crate::encode::{load_bank, Encoder, EncoderKind, FilterBank, IrisCode};
use crate::error::{Error, Result};
use crate::eval::{all_pairs, EvalReport, ScoreSet};
use crate::imagecore::GrayImage;
use crate::matching::{match_shifted, MatchConfig, ScoreRow};
use crate::nnseg::{load_weights, mask_to_seg, Network};
use crate::normalize::rubber_sheet;
use crate::segment::{segment, SegResult, SegmentConfig, SegmentMode};
use crate::synth::{render_corpus, EyeLabel, ManifestEntry};

/// A configured segmentation method.
pub enum Segmenter {
    Classical(SegmentMode, SegmentConfig),
    Neural { network: Network, threshold: f64 },
}

impl Segmenter {
    /// Relative weight paths resolve against `base_dir`.
    pub fn from_config(cfg: &PipelineConfig, base_dir: &Path) -> Result<Self> {
        Ok(match cfg.segmenter {
            SegmenterKind::Infant => Segmenter::Classical(SegmentMode::Infant, cfg.segment.clone()),
            SegmenterKind::AdultLegacy => Segmenter::Classical(SegmentMode::AdultLegacy, cfg.segment.clone()),
            SegmenterKind::Nn => {
                let path = cfg.nn.weights_path.as_ref().ok_or_else(|| {
                    crate::config::ConfigError::Invalid("nn segmentation needs nn.weights_path".into())
                })?;
                let weights = load_weights(base_dir.join(path))?;
                Segmenter::Neural {
                    network: Network::from_weights(&weights, &cfg.nn.network)?,
                    threshold: cfg.nn.threshold,
                }
            }
        })
    }

    pub fn segment(&self, img: &GrayImage) -> Result<SegResult> {
        match self {
            Segmenter::Classical(mode, cfg) => Ok(segment(img, *mode, cfg)?),
            Segmenter::Neural { network, threshold } => Ok(mask_to_seg(&network.forward(img)?, *threshold)?),
        }
    }
}

pub fn build_encoder(cfg: &EncoderConfig, base_dir: &Path) -> Result<Encoder> {
    Ok(match cfg.kind {
        EncoderKind::Loggabor1d => Encoder::LogGabor(cfg.loggabor.clone()),
        EncoderKind::Gabor2d => Encoder::Gabor2d(cfg.gabor2d.clone()),
        EncoderKind::Bank => Encoder::Bank(match &cfg.bank_path {
            Some(p) => load_bank(base_dir.join(p))?,
            None => FilterBank::random(cfg.random_bank_seed, cfg.random_bank_count, cfg.random_bank_size)?,
        }),
    })
}

/// Segment, normalize and encode one image.
pub fn encode_image(
    img: &GrayImage,
    segmenter: &Segmenter,
    encoder: &Encoder,
    cfg: &PipelineConfig,
) -> Result<(SegResult, IrisCode)> {
    let seg = segmenter.segment(img)?;
    let norm = rubber_sheet(img, &seg, cfg.normalization.rows, cfg.normalization.cols)?;
    let code = encoder.encode(&norm)?;
    Ok((seg, code))
}

/// Identity of one sample and its code, if encoding succeeded.
#[derive(Debug, Clone)]
pub struct CodedSample {
    pub sample_id: String,
    pub subject_id: String,
    pub eye_label: EyeLabel,
    pub code: Option<IrisCode>,
}

/// Scores every unordered pair. Pairs involving a sample without a code are
/// failures to match.
pub fn match_all(samples: &[CodedSample], cfg: &MatchConfig) -> Result<Vec<ScoreRow>> {
    let stubs: Vec<ManifestEntry> = samples
        .iter()
        .map(|s| ManifestEntry {
            sample_id: s.sample_id.clone(),
            subject_id: s.subject_id.clone(),
            eye_label: s.eye_label,
            image_path: String::new(),
            annotation_path: String::new(),
            spec: crate::synth::EyeSpec::new(0, 0, crate::synth::PupilPolarity::BrightPupil),
            quality: None,
        })
        .collect();
    all_pairs(&stubs)
        .par_iter()
        .enumerate()
        .map(|(pair_id, p)| {
            let (a, b) = (&samples[p.a], &samples[p.b]);
            let outcome = match (&a.code, &b.code) {
                (Some(ca), Some(cb)) => Some(match_shifted(ca, cb, cfg)?),
                _ => None,
            };
            let score = outcome.and_then(|o| o.score);
            Ok(ScoreRow {
                pair_id,
                subject_a: a.subject_id.clone(),
                sample_a: a.sample_id.clone(),
                subject_b: b.subject_id.clone(),
                sample_b: b.sample_id.clone(),
                kind: p.kind,
                score,
                ftm: score.is_none() as u8,
                best_shift: outcome.map_or(0, |o| o.best_shift),
            })
        })
        .collect::<std::result::Result<Vec<_>, crate::matching::MatchError>>()
        .map_err(Error::from)
}

/// Outcome of [`run_in_memory`].
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub samples: Vec<CodedSample>,
    /// `(sample_id, reason)` for each sample that failed to encode.
    pub failures: Vec<(String, String)>,
    pub scores: Vec<ScoreRow>,
    pub report: EvalReport,
}

/// Renders the configured corpus and runs every stage without touching the
/// filesystem (except to load weights or a bank, relative to `base_dir`).
pub fn run_in_memory(cfg: &PipelineConfig, base_dir: &Path) -> Result<PipelineRun> {
    cfg.validate()?;
    let segmenter = Segmenter::from_config(cfg, base_dir)?;
    let encoder = build_encoder(&cfg.encoder, base_dir)?;
    let rendered = render_corpus(&cfg.corpus)?;
    let coded: Vec<(CodedSample, Option<String>)> = rendered
        .par_iter()
        .map(|r| {
            let res = encode_image(&r.image, &segmenter, &encoder, cfg);
            let (code, err) = match res {
                Ok((_, code)) => (Some(code), None),
                Err(e) => (None, Some(e.to_string())),
            };
            (
                CodedSample {
                    sample_id: r.sample_id.clone(),
                    subject_id: r.subject_id.clone(),
                    eye_label: r.eye_label,
                    code,
                },
                err,
            )
        })
        .collect();
    let mut samples = Vec::with_capacity(coded.len());
    let mut failures = Vec::new();
    for (s, err) in coded {
        if let Some(e) = err {
            failures.push((s.sample_id.clone(), e));
        }
        samples.push(s);
    }
    let scores = match_all(&samples, &cfg.matching)?;
    let set = ScoreSet::from_rows(&scores);
    let report = EvalReport::from_scores(&set, cfg.lower_is_genuine, serde_json::to_value(cfg)?)?;
    Ok(PipelineRun {
        samples,
        failures,
        scores,
        report,
    })
}
