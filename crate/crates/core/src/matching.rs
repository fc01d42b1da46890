//! Masked fractional Hamming distance, rotation-compensated matching and the
//! identity-leakage filter.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::IrisCode;
use crate::error::PathIoError;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("incompatible codes: {0}")]
    IncompatibleCodes(String),
    #[error(transparent)]
    Io(#[from] PathIoError),
    #[error("score table: {0}")]
    Table(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Minimum jointly valid bits, as a fraction of all code bits.
    pub min_usable_fraction: f64,
    /// Largest circular column shift tried in each direction.
    pub max_shift: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            min_usable_fraction: 0.1,
            max_shift: 24,
        }
    }
}

impl MatchConfig {
    pub fn min_usable_bits(&self, code: &IrisCode) -> usize {
        (self.min_usable_fraction * code.total_bits() as f64).ceil() as usize
    }
}

/// `score` is `None` for a failure to match (too few jointly valid bits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub score: Option<f64>,
    pub usable_bits: usize,
    pub best_shift: i64,
}

impl MatchOutcome {
    pub fn is_ftm(&self) -> bool {
        self.score.is_none()
    }
}

fn check(a: &IrisCode, b: &IrisCode) -> Result<(), MatchError> {
    if a.same_layout(b) {
        return Ok(());
    }
    Err(MatchError::IncompatibleCodes(format!(
        "{}#{:016x} {}x{} vs {}#{:016x} {}x{}",
        a.encoder_id,
        a.params_hash,
        a.rows(),
        a.cols(),
        b.encoder_id,
        b.params_hash,
        b.rows(),
        b.cols()
    )))
}

/// (disagreeing, jointly valid) bit counts.
#[inline]
fn counts(a: &IrisCode, b: &IrisCode) -> (usize, usize) {
    let mut diff = 0u64;
    let mut joint = 0u64;
    for ((ba, ma), (bb, mb)) in a
        .bit_words()
        .iter()
        .zip(a.mask_words())
        .zip(b.bit_words().iter().zip(b.mask_words()))
    {
        let m = ma & mb;
        joint += m.count_ones() as u64;
        diff += ((ba ^ bb) & m).count_ones() as u64;
    }
    (diff as usize, joint as usize)
}

fn outcome(diff: usize, joint: usize, min_bits: usize, shift: i64) -> MatchOutcome {
    MatchOutcome {
        score: (joint >= min_bits && joint > 0).then(|| diff as f64 / joint as f64),
        usable_bits: joint,
        best_shift: shift,
    }
}

pub fn fractional_hd(a: &IrisCode, b: &IrisCode, config: &MatchConfig) -> Result<MatchOutcome, MatchError> {
    check(a, b)?;
    let (diff, joint) = counts(a, b);
    Ok(outcome(diff, joint, config.min_usable_bits(a), 0))
}

/// Minimum fractional HD over circular column shifts `k` of `b` in
/// `[-max_shift, max_shift]`; `best_shift` is the minimizing `k`. Ties go to
/// the smallest `|k|`, then to the negative shift. FTM only when every shift
/// is FTM, in which case the outcome reports the shift with most usable bits.
pub fn match_shifted(a: &IrisCode, b: &IrisCode, config: &MatchConfig) -> Result<MatchOutcome, MatchError> {
    check(a, b)?;
    let min_bits = config.min_usable_bits(a);
    let max_shift = config.max_shift.min(a.cols() / 2) as i64;
    let mut buf = b.clone();
    let mut best: Option<MatchOutcome> = None;
    let mut best_ftm = outcome(0, 0, min_bits, 0);
    for k in shift_order(max_shift) {
        b.shift_into(k, &mut buf);
        let (diff, joint) = counts(a, &buf);
        let o = outcome(diff, joint, min_bits, k);
        match (o.score, best.and_then(|x| x.score)) {
            (Some(s), Some(cur)) if s < cur => best = Some(o),
            (Some(_), None) => best = Some(o),
            (None, _) if o.usable_bits > best_ftm.usable_bits => best_ftm = o,
            _ => {}
        }
    }
    Ok(best.unwrap_or(best_ftm))
}

fn shift_order(max_shift: i64) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_shift).flat_map(|k| [-k, k]))
}

/// Keeps the synthetic codes whose shifted score against every authentic code
/// is at least `threshold`. FTM comparisons never cause removal.
pub fn leak_filter(
    synthetic: &[IrisCode],
    authentic: &[IrisCode],
    threshold: f64,
    config: &MatchConfig,
) -> Result<Vec<usize>, MatchError> {
    let keep: Vec<bool> = synthetic
        .par_iter()
        .map(|s| {
            for a in authentic {
                if let Some(score) = match_shifted(s, a, config)?.score {
                    if score < threshold {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })
        .collect::<Result<_, MatchError>>()?;
    Ok(keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Genuine,
    Impostor,
}

/// One row of the score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub pair_id: usize,
    pub subject_a: String,
    pub sample_a: String,
    pub subject_b: String,
    pub sample_b: String,
    pub kind: PairKind,
    pub score: Option<f64>,
    pub ftm: u8,
    pub best_shift: i64,
}

pub fn write_score_table(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<(), MatchError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| PathIoError::new(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

pub fn read_score_table(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>, MatchError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| PathIoError::new(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
