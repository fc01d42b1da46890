//! All-pairs evaluation protocol and biometric metrics: d′, EER, AUC, ROC
//! and failure-to-match rate.

mod report;

pub use report::{read_report, write_histogram_csv, write_report, write_roc_csv, EvalReport, Histogram, REPORT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::PathIoError;
use crate::matching::{PairKind, ScoreRow};
use crate::synth::ManifestEntry;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty {0} score list")]
    Empty(&'static str),
    #[error("zero variance")]
    ZeroVariance,
    #[error("no comparison attempts")]
    NoAttempts,
    #[error(transparent)]
    Io(#[from] PathIoError),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Genuine and impostor scores plus failure-to-match counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub ftm_genuine: usize,
    pub ftm_impostor: usize,
    pub total_attempts: usize,
}

impl ScoreSet {
    pub fn push(&mut self, kind: PairKind, score: Option<f64>) {
        self.total_attempts += 1;
        match (kind, score) {
            (PairKind::Genuine, Some(s)) => self.genuine.push(s),
            (PairKind::Impostor, Some(s)) => self.impostor.push(s),
            (PairKind::Genuine, None) => self.ftm_genuine += 1,
            (PairKind::Impostor, None) => self.ftm_impostor += 1,
        }
    }

    /// Concatenates two partial sets. Metrics depend only on the multiset of
    /// scores, so merge order does not affect any result.
    pub fn merge(mut self, other: ScoreSet) -> ScoreSet {
        self.genuine.extend(other.genuine);
        self.impostor.extend(other.impostor);
        self.ftm_genuine += other.ftm_genuine;
        self.ftm_impostor += other.ftm_impostor;
        self.total_attempts += other.total_attempts;
        self
    }

    pub fn from_rows(rows: &[ScoreRow]) -> ScoreSet {
        let mut s = ScoreSet::default();
        for r in rows {
            s.push(r.kind, if r.ftm != 0 { None } else { r.score });
        }
        s
    }
}

/// One unordered comparison between manifest entries `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub kind: PairKind,
}

/// Every unordered pair exactly once, in `(a, b)` lexicographic order.
/// Genuine means same subject and same eye.
pub fn all_pairs(entries: &[ManifestEntry]) -> Vec<Pair> {
    let mut out = Vec::with_capacity(entries.len() * entries.len().saturating_sub(1) / 2);
    for a in 0..entries.len() {
        for b in a + 1..entries.len() {
            let same = entries[a].subject_id == entries[b].subject_id && entries[a].eye_label == entries[b].eye_label;
            out.push(Pair {
                a,
                b,
                kind: if same { PairKind::Genuine } else { PairKind::Impostor },
            });
        }
    }
    out
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Decidability `|μg − μi| / sqrt((σg² + σi²)/2)` with sample variances.
pub fn dprime(s: &ScoreSet) -> Result<f64, EvalError> {
    if s.genuine.is_empty() {
        return Err(EvalError::Empty("genuine"));
    }
    if s.impostor.is_empty() {
        return Err(EvalError::Empty("impostor"));
    }
    let (mg, vg) = mean_var(&s.genuine);
    let (mi, vi) = mean_var(&s.impostor);
    let pooled = (vg + vi) / 2.0;
    if pooled <= 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((mg - mi).abs() / pooled.sqrt())
}

/// One operating point. Acceptance is `score ≤ threshold` when lower scores
/// are genuine, `score ≥ threshold` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSummary {
    pub eer: f64,
    pub auc: f64,
    /// One point per distinct observed score, FMR nondecreasing.
    pub roc: Vec<RocPoint>,
}

/// Sweeps every observed score as a threshold.
///
/// The EER is read off the lower convex hull of the operating points
/// (including the reject-all point FMR 0, FNMR 1) where it crosses
/// FMR = FNMR; this is the error rate reachable by randomizing between two
/// adjacent hull thresholds. The AUC is the trapezoidal area under
/// (FMR, 1 − FNMR), which counts tied genuine/impostor scores as one half.
pub fn eer_auc(s: &ScoreSet, lower_is_genuine: bool) -> Result<RocSummary, EvalError> {
    if s.genuine.is_empty() {
        return Err(EvalError::Empty("genuine"));
    }
    if s.impostor.is_empty() {
        return Err(EvalError::Empty("impostor"));
    }
    let orient = |v: f64| if lower_is_genuine { v } else { -v };
    let mut gen: Vec<f64> = s.genuine.iter().map(|&v| orient(v)).collect();
    let mut imp: Vec<f64> = s.impostor.iter().map(|&v| orient(v)).collect();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (gen.len() as f64, imp.len() as f64);
    let (mut gi, mut ii) = (0, 0);
    let mut roc = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        while gi < gen.len() && gen[gi] <= t {
            gi += 1;
        }
        while ii < imp.len() && imp[ii] <= t {
            ii += 1;
        }
        roc.push(RocPoint {
            threshold: orient(t),
            fmr: ii as f64 / ni,
            fnmr: (gen.len() - gi) as f64 / ng,
        });
    }

    let mut pts = Vec::with_capacity(roc.len() + 1);
    pts.push((0.0, 1.0));
    pts.extend(roc.iter().map(|p| (p.fmr, p.fnmr)));

    let mut auc = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        auc += (x1 - x0) * ((1.0 - y0) + (1.0 - y1)) / 2.0;
    }

    Ok(RocSummary {
        eer: hull_eer(&pts),
        auc,
        roc,
    })
}

/// Crossing of the lower convex hull of `pts` (sorted by x, y
/// nonincreasing, starting at (0, 1) and ending at x = 1) with y = x.
fn hull_eer(pts: &[(f64, f64)]) -> f64 {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    for w in hull.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let (d0, d1) = (y0 - x0, y1 - x1);
        if d0 >= 0.0 && d1 <= 0.0 {
            if d0 == d1 {
                return x0;
            }
            let t = d0 / (d0 - d1);
            return x0 + t * (x1 - x0);
        }
    }
    // Unreachable for a full ROC, which ends at FMR 1 with FNMR 0.
    hull.last().map_or(0.5, |p| p.0)
}

pub fn ftm_rate(s: &ScoreSet) -> Result<f64, EvalError> {
    if s.total_attempts == 0 {
        return Err(EvalError::NoAttempts);
    }
    Ok((s.ftm_genuine + s.ftm_impostor) as f64 / s.total_attempts as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn set(g: &[f64], i: &[f64]) -> ScoreSet {
        ScoreSet {
            genuine: g.to_vec(),
            impostor: i.to_vec(),
            ftm_genuine: 0,
            ftm_impostor: 0,
            total_attempts: g.len() + i.len(),
        }
    }

    /// Every threshold between and beyond observed scores, every pair of
    /// resulting operating points mixed to hit FMR = FNMR; the smallest
    /// attainable equal error.
    fn brute_eer(g: &[f64], i: &[f64]) -> f64 {
        let mut ts: Vec<f64> = g.iter().chain(i).copied().collect();
        ts.push(f64::NEG_INFINITY);
        let pts: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| {
                let fmr = i.iter().filter(|&&v| v <= t).count() as f64 / i.len() as f64;
                let fnmr = g.iter().filter(|&&v| v > t).count() as f64 / g.len() as f64;
                (fmr, fnmr)
            })
            .collect();
        let mut best = f64::INFINITY;
        for &(x0, y0) in &pts {
            for &(x1, y1) in &pts {
                let (d0, d1) = (y0 - x0, y1 - x1);
                if d0 >= 0.0 && d1 <= 0.0 {
                    let e = if d0 == d1 { x0 } else { x0 + d0 / (d0 - d1) * (x1 - x0) };
                    best = best.min(e);
                }
            }
        }
        best
    }

    /// Probability that a genuine score beats an impostor score, ties ½.
    fn mann_whitney(g: &[f64], i: &[f64]) -> f64 {
        let mut s = 0.0;
        for &a in g {
            for &b in i {
                s += if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        s / (g.len() * i.len()) as f64
    }

    #[test]
    fn four_score_case() {
        let r = eer_auc(&set(&[0.1, 0.3], &[0.2, 0.4]), true).unwrap();
        assert!((r.eer - 0.25).abs() < 1e-12);
        assert!((brute_eer(&[0.1, 0.3], &[0.2, 0.4]) - 0.25).abs() < 1e-12);
        assert!((r.auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn separable_and_chance() {
        let r = eer_auc(&set(&[0.1, 0.2], &[0.4, 0.5]), true).unwrap();
        assert_eq!((r.eer, r.auc), (0.0, 1.0));
        let v = [0.1, 0.2, 0.3, 0.4];
        let r = eer_auc(&set(&v, &v), true).unwrap();
        assert!((r.eer - 0.5).abs() < 1e-12 && (r.auc - 0.5).abs() < 1e-12);
        let r = eer_auc(&set(&[0.9, 0.8], &[0.1, 0.2]), false).unwrap();
        assert_eq!((r.eer, r.auc), (0.0, 1.0));
    }

    #[test]
    fn roc_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..0.6)).collect();
        let i: Vec<f64> = (0..70).map(|_| rng.random_range(0.3..1.0)).collect();
        let r = eer_auc(&set(&g, &i), true).unwrap();
        for w in r.roc.windows(2) {
            assert!(w[1].fmr >= w[0].fmr && w[1].fnmr <= w[0].fnmr);
        }
    }

    #[test]
    fn dprime_cases() {
        assert_eq!(dprime(&set(&[0.1, 0.3, 0.2], &[0.1, 0.3, 0.2])).unwrap(), 0.0);
        assert!(matches!(dprime(&set(&[0.0, 0.0], &[1.0, 1.0])), Err(EvalError::ZeroVariance)));
        assert!(matches!(dprime(&set(&[], &[1.0])), Err(EvalError::Empty(_))));
    }

    #[test]
    fn ftm_cases() {
        let mut s = ScoreSet::default();
        assert!(ftm_rate(&s).is_err());
        for k in 0..200 {
            s.push(PairKind::Impostor, if k < 31 { None } else { Some(0.5) });
        }
        assert!((ftm_rate(&s).unwrap() - 0.155).abs() < 1e-12);
    }

    #[test]
    fn pair_counts() {
        use crate::synth::{EyeLabel, EyeSpec, PupilPolarity};
        let entry = |subj: usize, k: usize| ManifestEntry {
            sample_id: format!("{subj}_{k}"),
            subject_id: format!("{subj}"),
            eye_label: EyeLabel::Left,
            image_path: String::new(),
            annotation_path: String::new(),
            spec: EyeSpec::new(0, 0, PupilPolarity::BrightPupil),
            quality: None,
        };
        let es: Vec<_> = (0..2).flat_map(|s| (0..2).map(move |k| entry(s, k))).collect();
        let pairs = all_pairs(&es);
        assert_eq!(pairs.iter().filter(|p| p.kind == PairKind::Genuine).count(), 2);
        assert_eq!(pairs.iter().filter(|p| p.kind == PairKind::Impostor).count(), 4);
        assert!(all_pairs(&es[..1]).is_empty());
        let big: Vec<_> = (0..7).flat_map(|s| (0..3).map(move |k| entry(s, k))).collect();
        assert_eq!(all_pairs(&big).len(), 21 * 20 / 2);
    }

    proptest! {
        #[test]
        fn matches_oracles(
            g in prop::collection::vec(0u8..40, 1..50),
            i in prop::collection::vec(0u8..40, 1..50),
        ) {
            let g: Vec<f64> = g.iter().map(|&v| v as f64 / 40.0).collect();
            let i: Vec<f64> = i.iter().map(|&v| v as f64 / 40.0).collect();
            let r = eer_auc(&set(&g, &i), true).unwrap();
            prop_assert!((r.eer - brute_eer(&g, &i)).abs() < 1e-9);
            prop_assert!((r.auc - mann_whitney(&g, &i)).abs() < 1e-9);
            let tg: Vec<f64> = g.iter().map(|v| (3.0 * v).exp()).collect();
            let ti: Vec<f64> = i.iter().map(|v| (3.0 * v).exp()).collect();
            let t = eer_auc(&set(&tg, &ti), true).unwrap();
            prop_assert_eq!((t.eer, t.auc), (r.eer, r.auc));
        }

        #[test]
        fn dprime_affine_invariant(
            g in prop::collection::vec(-5.0f64..5.0, 2..30),
            i in prop::collection::vec(-5.0f64..5.0, 2..30),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            if let Ok(d) = dprime(&set(&g, &i)) {
                let tg: Vec<f64> = g.iter().map(|v| a * v + b).collect();
                let ti: Vec<f64> = i.iter().map(|v| a * v + b).collect();
                let t = dprime(&set(&tg, &ti)).unwrap();
                prop_assert!((t - d).abs() <= 1e-9 * d.max(1.0));
            }
        }
    }
}
