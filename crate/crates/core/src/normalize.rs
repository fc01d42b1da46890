//! Rubber-sheet normalization of the pupil-iris annulus onto a fixed
//! pseudo-polar grid.
//!
//! Angle `θ` runs counterclockwise (on screen) from the positive x-axis.
//! Column `j` samples `θ_j = 2πj/cols`; row `i` samples the radial fraction
//! `t_i = (i + 0.5)/rows` between the pupil boundary point `p(θ)` and the iris
//! boundary point `q(θ)`, each taken on its own circle at angle `θ`.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::imagecore::{Circle, FloatImage, GrayImage, MaskImage};
use crate::segment::SegResult;

pub const DEFAULT_ROWS: usize = 64;
pub const DEFAULT_COLS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizationError {
    #[error("degenerate annulus: boundary separation {separation:.3} px at angle {theta:.3} rad")]
    DegenerateAnnulus { separation: f64, theta: f64 },
    #[error("pupil circle is not strictly inside the iris circle")]
    PupilOutsideIris,
    #[error("grid must have at least one row and column")]
    EmptyGrid,
}

/// Polar iris texture (`rows` × `cols`) and its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIris {
    pub texture: FloatImage,
    pub valid: MaskImage,
}

impl NormalizedIris {
    pub fn rows(&self) -> usize {
        self.texture.height()
    }

    pub fn cols(&self) -> usize {
        self.texture.width()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.count() as f64 / (self.rows() * self.cols()) as f64
    }

    /// Circularly shifts the texture and mask by `k` columns (positive moves
    /// content towards larger angles).
    pub fn shift_columns(&self, k: i64) -> NormalizedIris {
        let (rows, cols) = (self.rows(), self.cols());
        let src = |j: usize| ((j as i64 - k).rem_euclid(cols as i64)) as usize;
        let mut tex = FloatImage::zeros(cols, rows);
        let mut valid = MaskImage::new(cols, rows);
        for i in 0..rows {
            for j in 0..cols {
                tex.set(j, i, self.texture.get(src(j), i));
                valid.set(j, i, self.valid.get(src(j), i));
            }
        }
        NormalizedIris { texture: tex, valid }
    }
}

/// Homogeneous rubber-sheet sampling. A grid cell is valid iff its source
/// point is in frame and the nearest source pixel is set in `seg.mask`.
pub fn rubber_sheet(
    img: &GrayImage,
    seg: &SegResult,
    rows: usize,
    cols: usize,
) -> Result<NormalizedIris, NormalizationError> {
    if rows == 0 || cols == 0 {
        return Err(NormalizationError::EmptyGrid);
    }
    if !seg.iris.strictly_contains(&seg.pupil) {
        return Err(NormalizationError::PupilOutsideIris);
    }
    let mut texture = FloatImage::zeros(cols, rows);
    let mut valid = MaskImage::new(cols, rows);
    for j in 0..cols {
        let theta = TAU * j as f64 / cols as f64;
        let (px, py) = seg.pupil.point_at(theta);
        let (qx, qy) = seg.iris.point_at(theta);
        let separation = (qx - px).hypot(qy - py);
        if separation < 1.0 {
            return Err(NormalizationError::DegenerateAnnulus { separation, theta });
        }
        for i in 0..rows {
            let t = (i as f64 + 0.5) / rows as f64;
            let x = px + t * (qx - px);
            let y = py + t * (qy - py);
            if let Some(v) = img.sample(x, y) {
                texture.set(j, i, v);
                valid.set(j, i, seg.mask.get_signed(x.round() as i64, y.round() as i64));
            }
        }
    }
    Ok(NormalizedIris { texture, valid })
}

/// Inverse rubber-sheet map: the `(t, θ)` coordinates of image point
/// `(x, y)`, with `t = 0` on the pupil boundary and `t = 1` on the iris
/// boundary. Points inside the pupil give `t < 0`, points outside the iris
/// `t > 1`. `θ` is in `[0, 2π)`.
pub fn annulus_coords(x: f64, y: f64, pupil: &Circle, iris: &Circle) -> (f64, f64) {
    // Solve |w - t d| = r_p + t Δr for the branch with positive radius.
    let (wx, wy) = (x - pupil.cx, y - pupil.cy);
    let (dx, dy) = (iris.cx - pupil.cx, iris.cy - pupil.cy);
    let dr = iris.r - pupil.r;
    let a = dx * dx + dy * dy - dr * dr;
    let b = -2.0 * (wx * dx + wy * dy + pupil.r * dr);
    let c = wx * wx + wy * wy - pupil.r * pupil.r;
    let t = if a.abs() < 1e-12 {
        -c / b
    } else {
        let disc = (b * b - 4.0 * a * c).max(0.0);
        // a < 0 for nested circles, so the larger root is (-b - √disc)/2a.
        (-b - disc.sqrt()) / (2.0 * a)
    };
    let ux = wx - t * dx;
    let uy = wy - t * dy;
    let theta = (-uy).atan2(ux).rem_euclid(TAU);
    (t, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_seg(w: usize, h: usize, pupil: Circle, iris: Circle) -> SegResult {
        SegResult::from_circles(pupil, iris, w, h)
    }

    #[test]
    fn radial_image_gives_constant_rows() {
        let (w, h) = (200, 200);
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 - 100.0, (i / w) as f64 - 100.0);
                (x.hypot(y) * 2.0).min(255.0) as u8
            })
            .collect();
        let img = GrayImage::from_raw(w, h, px);
        let seg = full_seg(w, h, Circle::new(100.0, 100.0, 20.0), Circle::new(100.0, 100.0, 80.0));
        let n = rubber_sheet(&img, &seg, 64, 512).unwrap();
        for i in 0..64 {
            let row: Vec<f64> = (0..512).map(|j| n.texture.get(j, i)).collect();
            let lo = row.iter().cloned().fold(f64::MAX, f64::min);
            let hi = row.iter().cloned().fold(f64::MIN, f64::max);
            assert!(hi - lo <= 1.0 + 1e-9, "row {i} spans {lo}..{hi}");
        }
    }

    #[test]
    fn empty_mask_gives_no_valid_cells() {
        let img = GrayImage::filled(100, 100, 50);
        let mut seg = full_seg(100, 100, Circle::new(50.0, 50.0, 10.0), Circle::new(50.0, 50.0, 30.0));
        seg.mask = MaskImage::new(100, 100);
        let n = rubber_sheet(&img, &seg, 16, 64).unwrap();
        assert_eq!(n.valid.count(), 0);
    }

    #[test]
    fn degenerate_annulus_rejected() {
        let img = GrayImage::filled(100, 100, 50);
        // Iris boundary touches the pupil boundary on the right side.
        let seg = full_seg(100, 100, Circle::new(55.0, 50.0, 20.0), Circle::new(50.0, 50.0, 25.5));
        assert!(matches!(
            rubber_sheet(&img, &seg, 8, 64),
            Err(NormalizationError::DegenerateAnnulus { .. })
        ));
    }

    #[test]
    fn inverse_map_round_trips() {
        let pupil = Circle::new(101.0, 98.0, 30.0);
        let iris = Circle::new(97.0, 100.0, 90.0);
        for k in 0..50 {
            let theta = TAU * k as f64 / 50.0;
            for &t in &[-0.5, 0.0, 0.3, 0.77, 1.0, 1.4] {
                let (px, py) = pupil.point_at(theta);
                let (qx, qy) = iris.point_at(theta);
                let (x, y) = (px + t * (qx - px), py + t * (qy - py));
                if t < 0.0 && (pupil.r + t * (iris.r - pupil.r)) <= 0.0 {
                    continue;
                }
                let (t2, th2) = annulus_coords(x, y, &pupil, &iris);
                assert!((t2 - t).abs() < 1e-9, "t {t} -> {t2}");
                let dth = (th2 - theta).rem_euclid(TAU);
                assert!(dth < 1e-9 || TAU - dth < 1e-9);
            }
        }
    }
}
