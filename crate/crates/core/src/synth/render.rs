use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mix_seed, EyeAnnotation, EyeSpec, IrisTexture, PupilPolarity, SpecError};
use crate::imagecore::{gaussian_blur, Circle, FloatImage, GrayImage};
use crate::normalize::annulus_coords;
use crate::segment::annulus_mask;

/// Non-highlight pixels are clipped below the saturation level used by the
/// segmenter, so only deliberate highlights read as specular.
const MAX_DIFFUSE: f64 = 248.0;

/// Identity-level appearance.
struct Appearance {
    iris_level: f64,
    iris_amplitude: f64,
    pupil_level: f64,
    sclera_level: f64,
    skin_level: f64,
    pupil_offset: (f64, f64),
}

impl Appearance {
    fn new(identity_seed: u64, polarity: PupilPolarity) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(identity_seed, 0xA99E));
        Self {
            iris_level: rng.random_range(95.0..115.0),
            iris_amplitude: rng.random_range(12.0..16.0),
            pupil_level: match polarity {
                PupilPolarity::BrightPupil => rng.random_range(165.0..190.0),
                PupilPolarity::DarkPupil => rng.random_range(20.0..35.0),
            },
            sclera_level: rng.random_range(180.0..195.0),
            skin_level: rng.random_range(140.0..158.0),
            pupil_offset: (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
        }
    }
}

struct Scene<'a> {
    pupil: Circle,
    iris: Circle,
    lid_top: f64,
    lid_bottom: f64,
    rotation: f64,
    look: &'a Appearance,
    texture: &'a IrisTexture,
}

impl Scene<'_> {
    fn value(&self, x: f64, y: f64) -> f64 {
        if y < self.lid_top || y > self.lid_bottom {
            return self.look.skin_level;
        }
        if self.pupil.contains(x, y) {
            return self.look.pupil_level;
        }
        let (t, theta) = annulus_coords(x, y, &self.pupil, &self.iris);
        if t <= 1.0 {
            self.look.iris_level + self.look.iris_amplitude * self.texture.eval(t, theta - self.rotation)
        } else {
            self.look.sclera_level
        }
    }

    fn near_edge(&self, x: f64, y: f64) -> bool {
        let dp = ((x - self.pupil.cx).hypot(y - self.pupil.cy) - self.pupil.r).abs();
        let di = ((x - self.iris.cx).hypot(y - self.iris.cy) - self.iris.r).abs();
        dp < 1.5 || di < 1.5 || (y - self.lid_top).abs() < 1.0 || (y - self.lid_bottom).abs() < 1.0
    }

    /// Pixel value with 4×4 supersampling on geometric edges.
    fn pixel(&self, x: usize, y: usize) -> f64 {
        let (fx, fy) = (x as f64, y as f64);
        if !self.near_edge(fx, fy) {
            return self.value(fx, fy);
        }
        let mut acc = 0.0;
        for sy in 0..4 {
            for sx in 0..4 {
                acc += self.value(fx - 0.375 + sx as f64 * 0.25, fy - 0.375 + sy as f64 * 0.25);
            }
        }
        acc / 16.0
    }
}

/// Renders one eye and its ground truth. Identical specs give bit-identical
/// output.
pub fn render_eye(spec: &EyeSpec) -> Result<(GrayImage, EyeAnnotation), SpecError> {
    spec.validate()?;
    let [w, h] = spec.canvas;
    let v = &spec.variation;
    let look = Appearance::new(spec.identity_seed, spec.polarity);
    let texture = IrisTexture::new(spec.identity_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.identity_seed, spec.session_seed));
    let mut sym = |a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };

    let rotation = sym(v.rotation_deg).to_radians();
    let ratio = spec.pupil_to_iris_ratio + sym(v.ratio_jitter);
    let iris_r = spec.iris_radius + sym(v.radius_jitter);
    let cx = (w as f64 - 1.0) / 2.0 + sym(v.center_jitter);
    let cy = (h as f64 - 1.0) / 2.0 + sym(v.center_jitter);
    let coverage = (spec.eyelid_coverage + sym(v.eyelid_jitter)).clamp(0.0, 0.4);
    let pupil_r = ratio * iris_r;
    let iris = Circle::new(cx, cy, iris_r);
    let pupil = Circle::new(
        cx + look.pupil_offset.0 * pupil_r,
        cy + look.pupil_offset.1 * pupil_r,
        pupil_r,
    );
    let lid_top = cy - iris_r + coverage * 2.0 * iris_r * 0.6;
    let lid_bottom = cy + iris_r - coverage * 2.0 * iris_r * 0.4;

    let scene = Scene {
        pupil,
        iris,
        lid_top,
        lid_bottom,
        rotation,
        look: &look,
        texture: &texture,
    };
    let mut canvas = FloatImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            canvas.set(x, y, scene.pixel(x, y));
        }
    }
    let mut canvas = gaussian_blur(&canvas, spec.blur_sigma);
    if v.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, v.noise_sigma).expect("finite sigma");
        for val in canvas.values_mut() {
            *val += noise.sample(&mut rng);
        }
    }
    for val in canvas.values_mut() {
        *val = val.round().clamp(0.0, MAX_DIFFUSE);
    }
    let mut img = canvas.to_gray();

    let mut occlusion = annulus_mask(&pupil, &iris, w, h);
    for y in 0..h {
        let yf = y as f64;
        if yf < lid_top || yf > lid_bottom {
            for x in 0..w {
                occlusion.set(x, y, false);
            }
        }
    }
    for _ in 0..spec.highlight_count {
        let radius: f64 = rng.random_range(3.0..6.0);
        let mut center = None;
        for _ in 0..32 {
            let t: f64 = rng.random_range(0.3..0.7);
            let theta: f64 = rng.random_range(0.0..TAU);
            let (px, py) = pupil.point_at(theta);
            let (qx, qy) = iris.point_at(theta);
            let (hx, hy) = (px + t * (qx - px), py + t * (qy - py));
            if hy - radius > lid_top && hy + radius < lid_bottom {
                center = Some((hx, hy));
                break;
            }
        }
        let Some((hx, hy)) = center else { continue };
        let disc = Circle::new(hx, hy, radius + 1e-9);
        let y0 = (hy - radius).floor().max(0.0) as usize;
        let y1 = ((hy + radius).ceil() as usize).min(h - 1);
        let x0 = (hx - radius).floor().max(0.0) as usize;
        let x1 = ((hx + radius).ceil() as usize).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if disc.contains(x as f64, y as f64) {
                    img.set(x, y, 255);
                    occlusion.set(x, y, false);
                }
            }
        }
    }
    Ok((img, EyeAnnotation { pupil, iris, occlusion }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_where(img: &GrayImage, f: impl Fn(f64, f64) -> bool) -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                if f(x as f64, y as f64) && img.get(x, y) < 250 {
                    s += img.get(x, y) as f64;
                    n += 1.0;
                }
            }
        }
        s / n
    }

    #[test]
    fn polarity_orders_pupil_and_iris() {
        for (pol, bright) in [(PupilPolarity::BrightPupil, true), (PupilPolarity::DarkPupil, false)] {
            for seed in 0..4 {
                let (img, ann) = render_eye(&EyeSpec::new(seed, seed + 100, pol)).unwrap();
                let p = mean_where(&img, |x, y| ann.pupil.contains(x, y));
                let a = mean_where(&img, |x, y| {
                    ann.occlusion.get(x as usize, y as usize)
                });
                assert_eq!(p > a, bright, "{pol:?}: pupil {p}, annulus {a}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = EyeSpec::new(7, 8, PupilPolarity::BrightPupil);
        let (a, ann_a) = render_eye(&spec).unwrap();
        let (b, ann_b) = render_eye(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ann_a, ann_b);
    }

    #[test]
    fn annotation_invariants() {
        for seed in 0..6 {
            let (_, ann) = render_eye(&EyeSpec::new(seed, 3 * seed + 1, PupilPolarity::DarkPupil)).unwrap();
            assert!(ann.iris.strictly_contains(&ann.pupil));
            let annulus = annulus_mask(&ann.pupil, &ann.iris, 640, 480);
            assert!(ann.occlusion.is_subset_of(&annulus));
        }
    }

    #[test]
    fn highlights_are_saturated_and_masked() {
        let mut spec = EyeSpec::new(3, 4, PupilPolarity::DarkPupil);
        spec.highlight_count = 3;
        let (img, ann) = render_eye(&spec).unwrap();
        let mut saturated = 0;
        for y in 0..480 {
            for x in 0..640 {
                if img.get(x, y) >= 250 {
                    saturated += 1;
                    assert!(!ann.occlusion.get(x, y));
                }
            }
        }
        assert!(saturated > 0);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = EyeSpec::new(3, 4, PupilPolarity::DarkPupil);
        spec.pupil_to_iris_ratio = 0.05;
        assert!(render_eye(&spec).is_err());
    }
}
