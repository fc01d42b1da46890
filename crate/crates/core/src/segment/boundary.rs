//! Integro-differential circle search.
//!
//! For a candidate circle `(cx, cy, r)` the operator is the radial derivative
//! `(M(r+1) - M(r-1)) / 2` of the circular mean intensity `M` of a
//! Gaussian-smoothed, z-normalized image. Saturated pixels (specular
//! highlights) are left out of the means. The search runs on a block-averaged
//! grid first, then hill-climbs at full resolution down to 0.25 px steps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SegmentationError;
use crate::imagecore::{gaussian_blur, z_normalize, Circle, FloatImage, GrayImage, MaskImage};

/// Which intensity transition counts as a boundary, read from the inside out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Either direction; maximizes `|dM/dr|`.
    Agnostic,
    /// Dark inside, bright outside (adult pupil).
    Dark,
    /// Bright inside, dark outside.
    Bright,
}

impl Polarity {
    #[inline]
    fn score(self, d: f64) -> f64 {
        match self {
            Polarity::Agnostic => d.abs(),
            Polarity::Dark => d,
            Polarity::Bright => -d,
        }
    }
}

/// Angular support of the circular integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcSet {
    Full,
    /// Left and right arcs only, avoiding the eyelids.
    Lateral,
}

impl ArcSet {
    fn angles(self, per_arc: usize) -> Vec<(f64, f64)> {
        let to_unit = |t: f64| (t.cos(), t.sin());
        match self {
            ArcSet::Full => (0..per_arc * 2)
                .map(|k| to_unit(2.0 * PI * k as f64 / (per_arc * 2) as f64))
                .collect(),
            ArcSet::Lateral => {
                let (lo, hi) = ((-40f64).to_radians(), 30f64.to_radians());
                let arc = |offset: f64, flip: bool| {
                    (0..per_arc).map(move |k| {
                        let t = lo + (hi - lo) * (k as f64 + 0.5) / per_arc as f64;
                        if flip {
                            to_unit(offset - t)
                        } else {
                            to_unit(offset + t)
                        }
                    })
                };
                arc(0.0, false).chain(arc(PI, true)).collect()
            }
        }
    }
}

/// Axis-aligned bounds on candidate centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SearchRegion {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x_min: 0.0,
            x_max: (width - 1) as f64,
            y_min: 0.0,
            y_max: (height - 1) as f64,
        }
    }

    pub fn around(cx: f64, cy: f64, half: f64) -> Self {
        Self {
            x_min: cx - half,
            x_max: cx + half,
            y_min: cy - half,
            y_max: cy + half,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySearch {
    pub region: SearchRegion,
    pub r_min: f64,
    pub r_max: f64,
    pub polarity: Polarity,
    pub arcs: ArcSet,
    pub sigma: f64,
    pub response_floor: f64,
    pub saturation_level: u8,
}

impl BoundarySearch {
    /// Whole-frame search with the default smoothing and floor.
    pub fn new(img: &GrayImage, r_min: f64, r_max: f64, polarity: Polarity) -> Self {
        Self {
            region: SearchRegion::full(img.width(), img.height()),
            r_min,
            r_max,
            polarity,
            arcs: ArcSet::Full,
            sigma: 2.0,
            response_floor: 5.0,
            saturation_level: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryHit {
    pub circle: Circle,
    /// Polarity-adjusted radial derivative, gray levels per pixel.
    pub response: f64,
}

/// Smoothed z-normalized image plus the saturated-pixel exclusion mask.
pub(crate) struct Prepared {
    smooth: FloatImage,
    invalid: MaskImage,
    /// Gray levels per z unit.
    scale: f64,
    degenerate: bool,
}

impl Prepared {
    pub(crate) fn new(img: &GrayImage, sigma: f64, saturation_level: u8) -> Self {
        let z = z_normalize(img);
        let smooth = gaussian_blur(&z.image, sigma);
        let sat = MaskImage::from_fn(img.width(), img.height(), |x, y| {
            img.get(x, y) >= saturation_level
        });
        let invalid = sat.dilate(2 + (2.0 * sigma).ceil() as usize);
        Self {
            smooth,
            invalid,
            scale: z.std,
            degenerate: z.degenerate,
        }
    }

    fn downsample(&self, f: usize) -> Prepared {
        if f == 1 {
            return Prepared {
                smooth: self.smooth.clone(),
                invalid: self.invalid.clone(),
                scale: self.scale,
                degenerate: self.degenerate,
            };
        }
        let (w, h) = (self.smooth.width() / f, self.smooth.height() / f);
        let mut smooth = FloatImage::zeros(w, h);
        let mut invalid = MaskImage::new(w, h);
        let norm = (f * f) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut bad = false;
                for yy in y * f..(y + 1) * f {
                    for xx in x * f..(x + 1) * f {
                        acc += self.smooth.get(xx, yy);
                        bad |= self.invalid.get(xx, yy);
                    }
                }
                smooth.set(x, y, acc / norm);
                invalid.set(x, y, bad);
            }
        }
        Prepared {
            smooth,
            invalid,
            scale: self.scale,
            degenerate: self.degenerate,
        }
    }

    /// Mean over the sampled arc, or `None` when fewer than half the samples
    /// are usable.
    fn circular_mean(&self, cx: f64, cy: f64, r: f64, angles: &[(f64, f64)]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &(c, s) in angles {
            let x = cx + r * c;
            let y = cy - r * s;
            if self.invalid.get_signed(x.round() as i64, y.round() as i64) {
                continue;
            }
            if let Some(v) = self.smooth.sample(x, y) {
                sum += v;
                n += 1;
            }
        }
        (2 * n >= angles.len()).then(|| sum / n as f64)
    }

    fn derivative(&self, cx: f64, cy: f64, r: f64, angles: &[(f64, f64)]) -> Option<f64> {
        let outer = self.circular_mean(cx, cy, r + 1.0, angles)?;
        let inner = self.circular_mean(cx, cy, r - 1.0, angles)?;
        Some((outer - inner) / 2.0)
    }
}

/// Standalone boundary search on a raw image.
pub fn find_boundary(img: &GrayImage, search: &BoundarySearch) -> Result<BoundaryHit, SegmentationError> {
    let min_dim = img.width().min(img.height()) as f64;
    if search.r_min < 4.0 {
        return Err(SegmentationError::InvalidSearch(format!(
            "r_min {} below 4 px",
            search.r_min
        )));
    }
    if search.r_max >= min_dim / 2.0 || search.r_max <= search.r_min {
        return Err(SegmentationError::InvalidSearch(format!(
            "radius range [{}, {}] invalid for {}x{} image",
            search.r_min,
            search.r_max,
            img.width(),
            img.height()
        )));
    }
    let prepared = Prepared::new(img, search.sigma, search.saturation_level);
    search_prepared(&prepared, search, None)
}

pub(crate) fn search(
    prepared: &Prepared,
    search: &BoundarySearch,
    disk: Option<(f64, f64, f64)>,
) -> Result<BoundaryHit, SegmentationError> {
    search_prepared(prepared, search, disk)
}

const TOP_K: usize = 5;

fn search_prepared(
    prepared: &Prepared,
    search: &BoundarySearch,
    disk: Option<(f64, f64, f64)>,
) -> Result<BoundaryHit, SegmentationError> {
    let no_boundary = |response: f64| SegmentationError::NoBoundary {
        response,
        floor: search.response_floor,
    };
    if prepared.degenerate {
        return Err(no_boundary(0.0));
    }
    let allowed = |x: f64, y: f64| {
        search.region.contains(x, y)
            && disk.is_none_or(|(dx, dy, rad)| (x - dx).hypot(y - dy) <= rad + 1e-9)
    };

    // Coarse stage.
    let f = ((search.r_min / 3.0).floor() as usize).clamp(1, 8);
    let coarse = prepared.downsample(f);
    let ff = f as f64;
    let to_full = |i: usize| i as f64 * ff + (ff - 1.0) / 2.0;
    let coarse_angles = search.arcs.angles(16);
    let rc_min = (search.r_min / ff).max(1.5);
    let rc_max = search.r_max / ff;
    let n_radii = ((rc_max - rc_min).floor() as usize) + 1;
    let (cw, ch) = (coarse.smooth.width(), coarse.smooth.height());
    let mut candidates: Vec<(f64, usize, usize, f64)> = Vec::new();
    let mut means = vec![None; n_radii + 2];
    for cy in 0..ch {
        for cx in 0..cw {
            let (fx, fy) = (to_full(cx), to_full(cy));
            if !allowed(fx, fy) {
                continue;
            }
            for (k, m) in means.iter_mut().enumerate() {
                let r = rc_min + k as f64 - 1.0;
                *m = coarse.circular_mean(cx as f64, cy as f64, r, &coarse_angles);
            }
            let mut best: Option<(f64, f64)> = None;
            for k in 1..=n_radii {
                if let (Some(o), Some(i)) = (means[k + 1], means[k - 1]) {
                    let s = search.polarity.score((o - i) / 2.0);
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, rc_min + (k - 1) as f64));
                    }
                }
            }
            if let Some((s, r)) = best {
                candidates.push((s, cx, cy, r));
            }
        }
    }
    // Disk constraints can exclude every coarse cell centre; seed with the
    // disk centre so refinement still runs.
    if candidates.is_empty() {
        if let Some((dx, dy, _)) = disk {
            let cx = ((dx - (ff - 1.0) / 2.0) / ff).round().max(0.0) as usize;
            let cy = ((dy - (ff - 1.0) / 2.0) / ff).round().max(0.0) as usize;
            candidates.push((0.0, cx, cy, (rc_min + rc_max) / 2.0));
        } else {
            return Err(no_boundary(0.0));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut seeds: Vec<(f64, f64, f64)> = Vec::new();
    for &(_, cx, cy, r) in &candidates {
        let far = seeds.iter().all(|&(sx, sy, _)| {
            (sx - to_full(cx)).abs() > 2.0 * ff || (sy - to_full(cy)).abs() > 2.0 * ff
        });
        if far {
            seeds.push((to_full(cx), to_full(cy), r * ff));
            if seeds.len() == TOP_K {
                break;
            }
        }
    }

    // Fine stage.
    let fine_angles = search.arcs.angles(64);
    let eval = |x: f64, y: f64, r: f64| -> Option<f64> {
        if !allowed(x, y) || r < search.r_min || r > search.r_max {
            return None;
        }
        prepared
            .derivative(x, y, r, &fine_angles)
            .map(|d| search.polarity.score(d))
    };
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for (sx, sy, sr) in seeds {
        let start_r = sr.clamp(search.r_min, search.r_max);
        let Some(mut cur_s) = eval(sx, sy, start_r) else {
            continue;
        };
        let mut cur = (sx, sy, start_r);
        for step in [ff.max(2.0), 1.0, 0.5, 0.25] {
            for _ in 0..64 {
                let mut moved = false;
                let mut next = (cur_s, cur);
                for dx in [-1.0, 0.0, 1.0] {
                    for dy in [-1.0, 0.0, 1.0] {
                        for dr in [-1.0, 0.0, 1.0] {
                            if dx == 0.0 && dy == 0.0 && dr == 0.0 {
                                continue;
                            }
                            let cand = (cur.0 + dx * step, cur.1 + dy * step, cur.2 + dr * step);
                            if let Some(s) = eval(cand.0, cand.1, cand.2) {
                                if s > next.0 {
                                    next = (s, cand);
                                    moved = true;
                                }
                            }
                        }
                    }
                }
                if !moved {
                    break;
                }
                (cur_s, cur) = next;
            }
        }
        if best.is_none_or(|b| cur_s > b.0) {
            best = Some((cur_s, cur.0, cur.1, cur.2));
        }
    }
    let Some((score, x, y, r)) = best else {
        return Err(no_boundary(0.0));
    };
    let response = score * prepared.scale;
    if response < search.response_floor {
        return Err(no_boundary(response));
    }
    Ok(BoundaryHit {
        circle: Circle::new(x, y, r),
        response,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_image(w: usize, h: usize, c: Circle, inside: u8, outside: u8) -> GrayImage {
        let mut img = GrayImage::filled(w, h, outside);
        for y in 0..h {
            for x in 0..w {
                if c.contains(x as f64, y as f64) {
                    img.set(x, y, inside);
                }
            }
        }
        img
    }

    #[test]
    fn finds_dark_and_bright_discs() {
        let truth = Circle::new(130.3, 97.6, 31.2);
        for (inside, outside, pol) in [
            (30, 120, Polarity::Agnostic),
            (200, 120, Polarity::Agnostic),
            (30, 120, Polarity::Dark),
            (200, 120, Polarity::Bright),
        ] {
            let img = disc_image(256, 200, truth, inside, outside);
            let s = BoundarySearch::new(&img, 10.0, 60.0, pol);
            let hit = find_boundary(&img, &s).unwrap();
            assert!(hit.circle.center_distance(&truth) < 1.0, "{:?}", hit);
            assert!((hit.circle.r - truth.r).abs() < 1.0, "{:?}", hit);
        }
    }

    #[test]
    fn wrong_polarity_misses() {
        let truth = Circle::new(128.0, 100.0, 30.0);
        let img = disc_image(256, 200, truth, 200, 120);
        let s = BoundarySearch::new(&img, 10.0, 60.0, Polarity::Dark);
        match find_boundary(&img, &s) {
            Err(SegmentationError::NoBoundary { .. }) => {}
            Ok(hit) => assert!(
                hit.circle.center_distance(&truth) > 3.0 || (hit.circle.r - truth.r).abs() > 3.0
            ),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn uniform_image_has_no_boundary() {
        let img = GrayImage::filled(200, 160, 90);
        let s = BoundarySearch::new(&img, 8.0, 50.0, Polarity::Agnostic);
        assert!(matches!(
            find_boundary(&img, &s),
            Err(SegmentationError::NoBoundary { .. })
        ));
    }

    #[test]
    fn radius_preconditions() {
        let img = GrayImage::filled(200, 160, 90);
        let bad_min = BoundarySearch::new(&img, 3.0, 50.0, Polarity::Agnostic);
        assert!(matches!(find_boundary(&img, &bad_min), Err(SegmentationError::InvalidSearch(_))));
        let bad_max = BoundarySearch::new(&img, 8.0, 80.0, Polarity::Agnostic);
        assert!(matches!(find_boundary(&img, &bad_max), Err(SegmentationError::InvalidSearch(_))));
    }

    #[test]
    fn lateral_arcs_are_symmetric() {
        let a = ArcSet::Lateral.angles(8);
        assert_eq!(a.len(), 16);
        for k in 0..8 {
            assert!((a[k].0 + a[8 + k].0).abs() < 1e-12);
            assert!((a[k].1 - a[8 + k].1).abs() < 1e-12);
        }
    }
}
