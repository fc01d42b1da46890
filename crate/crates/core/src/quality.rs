//! Iris image quality metrics, the overall-quality combiner and the
//! sharpness-based curation filter.
//!
//! Each metric keeps the name, range and direction of its ISO/IEC 29794-6
//! counterpart; the formulas are documented surrogates.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::PathIoError;
use crate::imagecore::{load_image, Circle, GrayImage, MaskImage};
use crate::segment::{annulus_mask, saturation_mask, SegResult};
use crate::synth::{load_annotation, CorpusManifest};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error(transparent)]
    Io(#[from] PathIoError),
    #[error("quality table: {0}")]
    Table(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    /// Width of the bands on either side of a boundary, in pixels.
    pub band_width: f64,
    /// Laplacian-of-Gaussian kernel side (odd) and scale.
    pub log_size: usize,
    pub log_sigma: f64,
    /// Sharpness saturation constant: `100·(1 − exp(−s/s0))`.
    pub sharpness_s0: f64,
    /// Median grey-level difference that maps to contrast 100.
    pub contrast_full_scale: f64,
    /// Iris radius at which the radius component saturates.
    pub iris_radius_target: f64,
    /// Pupil/iris ratio range considered fully usable.
    pub ratio_range: [f64; 2],
    /// Floor applied to soft components inside the geometric mean.
    pub soft_floor: f64,
    pub saturation_level: u8,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            band_width: 5.0,
            log_size: 9,
            log_sigma: 1.4,
            sharpness_s0: 60.0,
            contrast_full_scale: 100.0,
            iris_radius_target: 100.0,
            ratio_range: [0.2, 0.7],
            soft_floor: 0.01,
            saturation_level: 250,
        }
    }
}

/// Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityReport {
    pub usable_iris_area: f64,
    pub iris_sclera_contrast: f64,
    pub iris_pupil_contrast: f64,
    pub grey_scale_utilisation: f64,
    pub iris_radius: f64,
    pub pupil_iris_ratio: f64,
    pub sharpness: f64,
    pub motion_blur: f64,
    pub overall_quality: f64,
}

pub fn quality_report(img: &GrayImage, seg: &SegResult, cfg: &QualityConfig) -> Result<QualityReport, QualityError> {
    let (w, h) = (img.width(), img.height());
    if !seg.is_valid() {
        return Err(QualityError::InvalidSegmentation(format!(
            "pupil {:?} not strictly inside iris {:?}",
            seg.pupil, seg.iris
        )));
    }
    if seg.mask.width() != w || seg.mask.height() != h {
        return Err(QualityError::InvalidSegmentation("mask dimensions differ from image".into()));
    }
    let annulus = annulus_mask(&seg.pupil, &seg.iris, w, h);
    let annulus_px = annulus.count();
    if annulus_px == 0 {
        return Err(QualityError::InvalidSegmentation("annulus lies outside the image".into()));
    }
    let usable = seg.mask.and(&annulus);
    let usable_iris_area = 100.0 * usable.count() as f64 / annulus_px as f64;

    let saturated = saturation_mask(img, cfg.saturation_level, 0);
    let bw = cfg.band_width;
    let lateral = |dx: f64, dy: f64| dy.abs() <= 0.5 * dx.abs();
    let anywhere = |_: f64, _: f64| true;
    let iris_inner = band_median(img, &saturated, &seg.iris, seg.iris.r - bw, seg.iris.r, lateral);
    let sclera = band_median(img, &saturated, &seg.iris, seg.iris.r, seg.iris.r + bw, lateral);
    let pupil_inner = band_median(img, &saturated, &seg.pupil, seg.pupil.r - bw, seg.pupil.r, anywhere);
    let iris_near_pupil = band_median(img, &saturated, &seg.pupil, seg.pupil.r, seg.pupil.r + bw, anywhere);
    let ramp = |d: f64| (100.0 * d / cfg.contrast_full_scale).clamp(0.0, 100.0);
    let iris_sclera_contrast = match (iris_inner, sclera) {
        (Some(i), Some(s)) => ramp(s - i),
        _ => 0.0,
    };
    let iris_pupil_contrast = match (pupil_inner, iris_near_pupil) {
        (Some(p), Some(i)) => ramp(i - p),
        _ => 0.0,
    };

    let texture_px = if usable.count() > 0 { &usable } else { &annulus };
    let grey_scale_utilisation = entropy(img, texture_px);

    let clean = texture_px.and_not(&saturated.dilate(cfg.log_size / 2 + 1));
    let s = log_energy(img, &clean, cfg.log_size, cfg.log_sigma);
    let sharpness = 100.0 * (1.0 - (-s / cfg.sharpness_s0).exp());
    let motion_blur = gradient_isotropy(img, &clean);

    let mut report = QualityReport {
        usable_iris_area,
        iris_sclera_contrast,
        iris_pupil_contrast,
        grey_scale_utilisation,
        iris_radius: seg.iris.r,
        pupil_iris_ratio: seg.pupil.r / seg.iris.r,
        sharpness,
        motion_blur,
        overall_quality: 0.0,
    };
    report.overall_quality = overall_quality(&report, cfg);
    Ok(report)
}

/// Hard-fail-gated geometric mean of the eight components mapped to [0, 1].
pub fn overall_quality(r: &QualityReport, cfg: &QualityConfig) -> f64 {
    let hard = [r.sharpness / 100.0, r.usable_iris_area / 100.0];
    if hard.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    let [lo, hi] = cfg.ratio_range;
    let ratio = if r.pupil_iris_ratio < lo {
        r.pupil_iris_ratio / lo
    } else if r.pupil_iris_ratio > hi {
        (1.0 - r.pupil_iris_ratio) / (1.0 - hi)
    } else {
        1.0
    };
    let soft = [
        r.iris_sclera_contrast / 100.0,
        r.iris_pupil_contrast / 100.0,
        r.grey_scale_utilisation / 8.0,
        r.iris_radius / cfg.iris_radius_target,
        ratio,
        r.motion_blur / 100.0,
    ];
    let log_sum: f64 = hard
        .iter()
        .map(|v| v.clamp(0.0, 1.0))
        .chain(soft.iter().map(|v| v.clamp(cfg.soft_floor, 1.0)))
        .map(f64::ln)
        .sum();
    (100.0 * (log_sum / 8.0).exp()).clamp(0.0, 100.0)
}

/// Median grey level of unsaturated pixels whose distance from `c`'s centre
/// lies in `[r0, r1)` and whose offset passes `keep`.
fn band_median(
    img: &GrayImage,
    saturated: &MaskImage,
    c: &Circle,
    r0: f64,
    r1: f64,
    keep: impl Fn(f64, f64) -> bool,
) -> Option<f64> {
    let r0 = r0.max(0.0);
    let mut hist = [0usize; 256];
    let mut n = 0usize;
    let y0 = (c.cy - r1).floor().max(0.0) as usize;
    let y1 = ((c.cy + r1).ceil().max(0.0) as usize).min(img.height() - 1);
    let x0 = (c.cx - r1).floor().max(0.0) as usize;
    let x1 = ((c.cx + r1).ceil().max(0.0) as usize).min(img.width() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - c.cx, y as f64 - c.cy);
            let d = dx.hypot(dy);
            if d >= r0 && d < r1 && keep(dx, dy) && !saturated.get(x, y) {
                hist[img.get(x, y) as usize] += 1;
                n += 1;
            }
        }
    }
    if n == 0 {
        return None;
    }
    let mut acc = 0;
    for (v, &count) in hist.iter().enumerate() {
        acc += count;
        if 2 * acc >= n {
            return Some(v as f64);
        }
    }
    None
}

/// Shannon entropy in bits of the 256-bin histogram over `region`.
fn entropy(img: &GrayImage, region: &MaskImage) -> f64 {
    let mut hist = [0usize; 256];
    let mut n = 0usize;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if region.get(x, y) {
                hist[img.get(x, y) as usize] += 1;
                n += 1;
            }
        }
    }
    if n == 0 {
        return 0.0;
    }
    let e = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * p.log2()
        })
        .sum::<f64>();
    e.max(0.0)
}

/// Zero-mean Laplacian-of-Gaussian, scaled so its negative taps sum to −1.
pub(crate) fn log_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as i64;
    let s2 = sigma * sigma;
    let mut k: Vec<f64> = (-half..=half)
        .flat_map(|y| (-half..=half).map(move |x| (x, y)))
        .map(|(x, y)| {
            let r2 = (x * x + y * y) as f64;
            (r2 - 2.0 * s2) / (s2 * s2) * (-r2 / (2.0 * s2)).exp()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let neg: f64 = k.iter().filter(|v| **v < 0.0).sum();
    k.iter_mut().for_each(|v| *v /= -neg);
    k
}

/// Mean squared LoG response over `region`, with the image clamped at edges.
fn log_energy(img: &GrayImage, region: &MaskImage, size: usize, sigma: f64) -> f64 {
    let k = log_kernel(size, sigma);
    let half = (size / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let rows: Vec<(f64, usize)> = (0..img.height())
        .into_par_iter()
        .map(|y| {
            let mut sum = 0.0;
            let mut n = 0;
            for x in 0..img.width() {
                if !region.get(x, y) {
                    continue;
                }
                let mut acc = 0.0;
                let mut idx = 0;
                for dy in -half..=half {
                    let yy = (y as i64 + dy).clamp(0, h - 1) as usize;
                    for dx in -half..=half {
                        let xx = (x as i64 + dx).clamp(0, w - 1) as usize;
                        acc += k[idx] * img.get(xx, yy) as f64;
                        idx += 1;
                    }
                }
                sum += acc * acc;
                n += 1;
            }
            (sum, n)
        })
        .collect();
    let (sum, n) = rows.iter().fold((0.0, 0), |(s, c), &(a, b)| (s + a, c + b));
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// `100·min(Ex, Ey)/max(Ex, Ey)` where `Ex`, `Ey` are horizontal and
/// vertical central-difference gradient energies over `region`.
fn gradient_isotropy(img: &GrayImage, region: &MaskImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let (mut ex, mut ey) = (0.0, 0.0);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if !region.get(x, y) {
                continue;
            }
            let gx = img.get(x + 1, y) as f64 - img.get(x - 1, y) as f64;
            let gy = img.get(x, y + 1) as f64 - img.get(x, y - 1) as f64;
            ex += gx * gx;
            ey += gy * gy;
        }
    }
    let hi = ex.max(ey);
    if hi <= 0.0 {
        return 0.0;
    }
    100.0 * (ex.min(ey) / hi).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedEntry {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationLog {
    pub kept: usize,
    pub dropped: usize,
    pub threshold: f64,
    pub dropped_entries: Vec<DroppedEntry>,
}

/// Quality of one manifest entry, loading image and annotation from
/// `base_dir`.
pub fn entry_quality(
    base_dir: &Path,
    entry: &crate::synth::ManifestEntry,
    cfg: &QualityConfig,
) -> Result<QualityReport, String> {
    let img = load_image(base_dir.join(&entry.image_path)).map_err(|e| e.to_string())?;
    let (ann, _) = load_annotation(base_dir.join(&entry.annotation_path)).map_err(|e| e.to_string())?;
    quality_report(&img, &ann.to_seg(), cfg).map_err(|e| e.to_string())
}

/// Keeps entries with sharpness at or above `threshold`. Missing quality
/// reports are computed from the files under `base_dir`; entries that cannot
/// be scored are dropped with the reason logged.
pub fn curate(
    manifest: &CorpusManifest,
    base_dir: &Path,
    threshold: f64,
    cfg: &QualityConfig,
) -> (CorpusManifest, CurationLog) {
    let scored: Vec<_> = manifest
        .entries
        .par_iter()
        .map(|e| match e.quality {
            Some(q) => Ok(q),
            None => entry_quality(base_dir, e, cfg),
        })
        .collect();
    let mut kept = Vec::new();
    let mut dropped_entries = Vec::new();
    for (entry, q) in manifest.entries.iter().zip(scored) {
        match q {
            Ok(q) if q.sharpness >= threshold => {
                let mut e = entry.clone();
                e.quality = Some(q);
                kept.push(e);
            }
            Ok(q) => dropped_entries.push(DroppedEntry {
                sample_id: entry.sample_id.clone(),
                reason: format!("sharpness {:.3} below {threshold}", q.sharpness),
            }),
            Err(reason) => dropped_entries.push(DroppedEntry {
                sample_id: entry.sample_id.clone(),
                reason,
            }),
        }
    }
    let log = CurationLog {
        kept: kept.len(),
        dropped: dropped_entries.len(),
        threshold,
        dropped_entries,
    };
    (CorpusManifest { version: manifest.version, entries: kept }, log)
}

/// One row per sample: `sample_id` followed by the report fields in order.
pub fn write_quality_csv(path: impl AsRef<Path>, rows: &[(String, QualityReport)]) -> Result<(), QualityError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| PathIoError::new(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "sample_id",
        "usable_iris_area",
        "iris_sclera_contrast",
        "iris_pupil_contrast",
        "grey_scale_utilisation",
        "iris_radius",
        "pupil_iris_ratio",
        "sharpness",
        "motion_blur",
        "overall_quality",
    ])?;
    for (id, r) in rows {
        let vals = [
            r.usable_iris_area,
            r.iris_sclera_contrast,
            r.iris_pupil_contrast,
            r.grey_scale_utilisation,
            r.iris_radius,
            r.pupil_iris_ratio,
            r.sharpness,
            r.motion_blur,
            r.overall_quality,
        ];
        let mut rec = vec![id.clone()];
        rec.extend(vals.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::gaussian_blur;
    use crate::synth::{render_eye, EyeSpec, PupilPolarity};

    fn rendered(polarity: PupilPolarity, seed: u64) -> (GrayImage, SegResult) {
        let spec = EyeSpec::new(seed, seed + 1, polarity);
        let (img, ann) = render_eye(&spec).unwrap();
        (img, ann.to_seg())
    }

    fn blurred(img: &GrayImage, sigma: f64) -> GrayImage {
        gaussian_blur(&img.to_float(), sigma).to_gray()
    }

    #[test]
    fn log_kernel_zero_mean() {
        let k = log_kernel(9, 1.4);
        assert_eq!(k.len(), 81);
        assert!(k.iter().sum::<f64>().abs() < 1e-12);
        assert!(k[40] < 0.0);
    }

    #[test]
    fn bright_pupil_zero_contrast() {
        let cfg = QualityConfig::default();
        for seed in 0..5 {
            let (img, seg) = rendered(PupilPolarity::BrightPupil, seed);
            let q = quality_report(&img, &seg, &cfg).unwrap();
            assert_eq!(q.iris_pupil_contrast, 0.0);
            assert!(q.iris_sclera_contrast > 0.0);
            assert!(q.overall_quality > 0.0);
            let (img, seg) = rendered(PupilPolarity::DarkPupil, seed);
            assert!(quality_report(&img, &seg, &cfg).unwrap().iris_pupil_contrast > 0.0);
        }
    }

    #[test]
    fn constant_annulus_zero_entropy() {
        let img = GrayImage::filled(200, 200, 120);
        let seg = SegResult::from_circles(Circle::new(100.0, 100.0, 20.0), Circle::new(100.0, 100.0, 60.0), 200, 200);
        let q = quality_report(&img, &seg, &QualityConfig::default()).unwrap();
        assert_eq!(q.grey_scale_utilisation, 0.0);
        assert_eq!(q.sharpness, 0.0);
        assert_eq!(q.overall_quality, 0.0);
    }

    #[test]
    fn blur_lowers_sharpness_below_threshold() {
        let cfg = QualityConfig::default();
        for seed in 0..5 {
            let (img, seg) = rendered(PupilPolarity::BrightPupil, seed);
            let crisp = quality_report(&img, &seg, &cfg).unwrap().sharpness;
            let mut last = crisp;
            for sigma in [1.0, 2.0, 5.0] {
                let s = quality_report(&blurred(&img, sigma), &seg, &cfg).unwrap().sharpness;
                assert!(s <= last, "sigma {sigma}: {s} > {last}");
                last = s;
            }
            assert!(crisp >= 10.0, "crisp {crisp}");
            assert!(last < 10.0, "blurred {last}");
        }
    }

    #[test]
    fn occlusion_lowers_usable_area() {
        let cfg = QualityConfig::default();
        let (img, mut seg) = rendered(PupilPolarity::DarkPupil, 3);
        let before = quality_report(&img, &seg, &cfg).unwrap().usable_iris_area;
        for y in 0..200 {
            for x in 0..img.width() {
                seg.mask.set(x, y, false);
            }
        }
        let after = quality_report(&img, &seg, &cfg).unwrap().usable_iris_area;
        assert!(after < before);
    }

    #[test]
    fn invalid_segmentation_rejected() {
        let img = GrayImage::filled(200, 200, 120);
        let seg = SegResult::from_circles(Circle::new(100.0, 100.0, 70.0), Circle::new(100.0, 100.0, 60.0), 200, 200);
        assert!(quality_report(&img, &seg, &QualityConfig::default()).is_err());
    }

    #[test]
    fn overall_bounds() {
        let cfg = QualityConfig::default();
        let r = QualityReport {
            usable_iris_area: 100.0,
            iris_sclera_contrast: 100.0,
            iris_pupil_contrast: 100.0,
            grey_scale_utilisation: 8.0,
            iris_radius: 200.0,
            pupil_iris_ratio: 0.4,
            sharpness: 100.0,
            motion_blur: 100.0,
            overall_quality: 0.0,
        };
        assert!((overall_quality(&r, &cfg) - 100.0).abs() < 1e-9);
        assert_eq!(overall_quality(&QualityReport { sharpness: 0.0, ..r }, &cfg), 0.0);
        let no_pupil = overall_quality(&QualityReport { iris_pupil_contrast: 0.0, ..r }, &cfg);
        assert!(no_pupil > 0.0 && no_pupil < 100.0);
    }
}
