use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EyeAnnotation;
use crate::imagecore::{rotate, rotate_mask, rotate_point, Circle, GrayImage};
use crate::segment::annulus_mask;

/// Infant-mimicking augmentation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    /// Pupil intensities are redrawn uniformly from `[lo, hi]`.
    pub lo: u8,
    pub hi: u8,
    /// Rotation angle drawn uniformly from `±max_rotation_deg`.
    pub max_rotation_deg: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            lo: 109,
            hi: 190,
            max_rotation_deg: 15.0,
        }
    }
}

/// Brightens the pupil with independent uniform draws, then rotates image
/// and annotation together. Returns the augmented pair and the applied angle
/// in degrees.
pub fn augment_infant(
    img: &GrayImage,
    ann: &EyeAnnotation,
    seed: u64,
    params: &AugmentParams,
) -> (GrayImage, EyeAnnotation, f64) {
    assert!(params.lo <= params.hi, "augmentation range is empty");
    assert!(params.max_rotation_deg.abs() <= 180.0, "rotation must be within ±180°");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if ann.pupil.contains(x as f64, y as f64) {
                out.set(x, y, rng.random_range(params.lo..=params.hi));
            }
        }
    }
    let m = params.max_rotation_deg.abs();
    let angle = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let (w, h) = (img.width(), img.height());
    let move_circle = |c: &Circle| {
        let (x, y) = rotate_point(c.cx, c.cy, w, h, angle);
        Circle::new(x, y, c.r)
    };
    let pupil = move_circle(&ann.pupil);
    let iris = move_circle(&ann.iris);
    let occlusion = rotate_mask(&ann.occlusion, angle).and(&annulus_mask(&pupil, &iris, w, h));
    (rotate(&out, angle), EyeAnnotation { pupil, iris, occlusion }, angle)
}
