use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{dprime, eer_auc, ftm_rate, EvalError, RocPoint, ScoreSet};
use crate::error::PathIoError;

pub const REPORT_VERSION: u32 = 1;

/// Genuine and impostor counts over equal-width bins on `[lo, hi]`. Scores
/// outside the range land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub genuine: Vec<usize>,
    pub impostor: Vec<usize>,
}

impl Histogram {
    pub fn new(s: &ScoreSet, bins: usize, lo: f64, hi: f64) -> Self {
        let bin = |v: f64| {
            let k = ((v - lo) / (hi - lo) * bins as f64).floor();
            (k.max(0.0) as usize).min(bins - 1)
        };
        let mut genuine = vec![0; bins];
        let mut impostor = vec![0; bins];
        s.genuine.iter().for_each(|&v| genuine[bin(v)] += 1);
        s.impostor.iter().for_each(|&v| impostor[bin(v)] += 1);
        Self { lo, hi, genuine, impostor }
    }

    pub fn bins(&self) -> usize {
        self.genuine.len()
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins() as f64;
        (self.lo + k as f64 * w, self.lo + (k + 1) as f64 * w)
    }
}

/// Metrics that cannot be computed (an empty side, zero variance) are
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub dprime: Option<f64>,
    pub eer: Option<f64>,
    pub auc: Option<f64>,
    pub ftm_rate: f64,
    pub lower_is_genuine: bool,
    pub genuine_count: usize,
    pub impostor_count: usize,
    pub ftm_genuine: usize,
    pub ftm_impostor: usize,
    pub total_attempts: usize,
    pub roc: Vec<RocPoint>,
    pub histogram: Histogram,
    /// Effective configuration of the run that produced the scores.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub const DEFAULT_BINS: usize = 50;

    pub fn from_scores(s: &ScoreSet, lower_is_genuine: bool, config: serde_json::Value) -> Result<Self, EvalError> {
        let ftm = ftm_rate(s)?;
        let summary = eer_auc(s, lower_is_genuine).ok();
        Ok(Self {
            version: REPORT_VERSION,
            dprime: dprime(s).ok(),
            eer: summary.as_ref().map(|r| r.eer),
            auc: summary.as_ref().map(|r| r.auc),
            ftm_rate: ftm,
            lower_is_genuine,
            genuine_count: s.genuine.len(),
            impostor_count: s.impostor.len(),
            ftm_genuine: s.ftm_genuine,
            ftm_impostor: s.ftm_impostor,
            total_attempts: s.total_attempts,
            roc: summary.map(|r| r.roc).unwrap_or_default(),
            histogram: Histogram::new(s, Self::DEFAULT_BINS, 0.0, 1.0),
            config,
        })
    }
}

pub fn write_report(path: impl AsRef<Path>, r: &EvalReport) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(r)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PathIoError::new(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Columns `bin_lo,bin_hi,genuine_count,impostor_count`.
pub fn write_histogram_csv(path: impl AsRef<Path>, h: &Histogram) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "genuine_count", "impostor_count"])?;
    for k in 0..h.bins() {
        let (lo, hi) = h.edges(k);
        w.write_record([lo.to_string(), hi.to_string(), h.genuine[k].to_string(), h.impostor[k].to_string()])?;
    }
    w.flush().map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

/// Columns `threshold,fmr,fnmr`.
pub fn write_roc_csv(path: impl AsRef<Path>, roc: &[RocPoint]) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for p in roc {
        w.serialize(p)?;
    }
    if roc.is_empty() {
        w.write_record(["threshold", "fmr", "fnmr"])?;
    }
    w.flush().map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn scores() -> ScoreSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut s = ScoreSet::default();
        for _ in 0..40 {
            s.push(crate::matching::PairKind::Genuine, Some(rng.random_range(0.0..0.4)));
        }
        for _ in 0..120 {
            s.push(crate::matching::PairKind::Impostor, Some(rng.random_range(0.35..0.55)));
        }
        s.push(crate::matching::PairKind::Impostor, None);
        s.push(crate::matching::PairKind::Genuine, Some(1.0));
        s
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = EvalReport::from_scores(&scores(), true, serde_json::json!({"seed": 7})).unwrap();
        write_report(&p, &r).unwrap();
        assert_eq!(read_report(&p).unwrap(), r);
    }

    #[test]
    fn histogram_conserves_counts() {
        let s = scores();
        let h = Histogram::new(&s, 50, 0.0, 1.0);
        assert_eq!(h.bins(), 50);
        assert_eq!(h.edges(0).0, 0.0);
        assert!((h.edges(49).1 - 1.0).abs() < 1e-12);
        assert_eq!(h.genuine.iter().sum::<usize>(), s.genuine.len());
        assert_eq!(h.impostor.iter().sum::<usize>(), s.impostor.len());
        assert_eq!(h.genuine[49], 1);
    }

    #[test]
    fn csv_headers() {
        let dir = tempfile::tempdir().unwrap();
        let r = EvalReport::from_scores(&scores(), true, serde_json::Value::Null).unwrap();
        let hp = dir.path().join("h.csv");
        write_histogram_csv(&hp, &r.histogram).unwrap();
        let text = fs::read_to_string(&hp).unwrap();
        assert!(text.starts_with("bin_lo,bin_hi,genuine_count,impostor_count\n"));
        assert_eq!(text.lines().count(), 51);
        let rp = dir.path().join("roc.csv");
        write_roc_csv(&rp, &r.roc).unwrap();
        assert!(fs::read_to_string(&rp).unwrap().starts_with("threshold,fmr,fnmr\n"));
    }

    #[test]
    fn undefined_metrics_are_null() {
        let mut s = ScoreSet::default();
        s.push(crate::matching::PairKind::Genuine, None);
        let r = EvalReport::from_scores(&s, true, serde_json::Value::Null).unwrap();
        assert_eq!((r.eer, r.auc, r.dprime, r.ftm_rate), (None, None, None, 1.0));
    }
}
