use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{filled_rows, fnv1a, near_zero_threshold, EncodeError, IrisCode};
use crate::normalize::NormalizedIris;

pub const ENCODER_ID: &str = "gabor2d";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gabor2dParams {
    /// Angular wavelengths, one filter pair per entry, in texture columns.
    pub wavelengths: Vec<f64>,
}

impl Default for Gabor2dParams {
    fn default() -> Self {
        Self {
            wavelengths: vec![8.0, 16.0, 32.0],
        }
    }
}

impl Gabor2dParams {
    pub fn params_hash(&self) -> u64 {
        let mut b = ENCODER_ID.as_bytes().to_vec();
        for w in &self.wavelengths {
            b.extend(w.to_le_bytes());
        }
        fnv1a(&b)
    }
}

/// Quadrature Gabor pair; the real part has its DC removed.
struct GaborKernel {
    half_r: i64,
    half_a: i64,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl GaborKernel {
    fn new(wavelength: f64, rows: usize) -> Self {
        let sigma_a = wavelength / 2.0;
        let sigma_r = (wavelength / 4.0).min(rows as f64 / 8.0).max(0.5);
        let half_a = (2.0 * sigma_a).ceil() as i64;
        let half_r = (2.0 * sigma_r).ceil() as i64;
        let mut env = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for dr in -half_r..=half_r {
            for da in -half_a..=half_a {
                let e = (-(dr * dr) as f64 / (2.0 * sigma_r * sigma_r)
                    - (da * da) as f64 / (2.0 * sigma_a * sigma_a))
                    .exp();
                let phase = TAU * da as f64 / wavelength;
                env.push(e);
                re.push(e * phase.cos());
                im.push(e * phase.sin());
            }
        }
        let dc = re.iter().sum::<f64>() / env.iter().sum::<f64>();
        for (r, e) in re.iter_mut().zip(&env) {
            *r -= dc * e;
        }
        Self { half_r, half_a, re, im }
    }
}

/// Quadrant phase quantization on a `rows/2 × cols/2` grid of sites at even
/// texture coordinates. Code row `(2·s + p)·(rows/2) + a` holds plane `p`
/// (0 real, 1 imaginary) of scale `s` for site row `a`.
pub fn encode_gabor2d(n: &NormalizedIris, params: &Gabor2dParams) -> Result<IrisCode, EncodeError> {
    let (rows, cols) = (n.rows(), n.cols());
    if params.wavelengths.is_empty() {
        return Err(EncodeError::Config("gabor2d needs at least one wavelength".into()));
    }
    if rows < 2 || cols < 2 {
        return Err(EncodeError::Config(format!("texture {rows}x{cols} too small for gabor2d")));
    }
    let (site_rows, site_cols) = (rows / 2, cols / 2);
    let scales = params.wavelengths.len();
    let mut code = IrisCode::new(site_rows * scales * 2, site_cols, ENCODER_ID, params.params_hash());
    let filled = filled_rows(n);
    let mean_fill = {
        let vals: Vec<f64> = filled.iter().flatten().flatten().copied().collect();
        if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 }
    };
    let tex = |i: i64, j: i64| -> f64 {
        let i = i.clamp(0, rows as i64 - 1) as usize;
        let j = j.rem_euclid(cols as i64) as usize;
        filled[i].as_ref().map_or(mean_fill, |r| r[j])
    };
    for (s, &wl) in params.wavelengths.iter().enumerate() {
        if wl <= 0.0 {
            return Err(EncodeError::Config(format!("wavelength {wl} must be positive")));
        }
        let k = GaborKernel::new(wl, rows);
        let width = (2 * k.half_a + 1) as usize;
        for a in 0..site_rows {
            let ci = (2 * a) as i64;
            let responses: Vec<(f64, f64)> = (0..site_cols)
                .map(|b| {
                    let cj = (2 * b) as i64;
                    let (mut re, mut im) = (0.0, 0.0);
                    for dr in -k.half_r..=k.half_r {
                        let base = ((dr + k.half_r) as usize) * width;
                        for da in -k.half_a..=k.half_a {
                            let v = tex(ci + dr, cj + da);
                            let idx = base + (da + k.half_a) as usize;
                            re += k.re[idx] * v;
                            im += k.im[idx] * v;
                        }
                    }
                    (re, im)
                })
                .collect();
            let thresh = near_zero_threshold(responses.iter().map(|(r, i)| r.hypot(*i)));
            let row_re = (2 * s) * site_rows + a;
            let row_im = (2 * s + 1) * site_rows + a;
            for (b, &(re, im)) in responses.iter().enumerate() {
                let ok = n.valid.get(2 * b, 2 * a) && re.hypot(im) >= thresh;
                code.set(row_re, b, re > 0.0, ok);
                code.set(row_im, b, im > 0.0, ok);
            }
        }
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{FloatImage, MaskImage};
    use rand::{Rng, SeedableRng};

    fn noise_texture(seed: u64) -> NormalizedIris {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..64 * 512).map(|_| rng.random_range(0.0..255.0)).collect();
        NormalizedIris {
            texture: FloatImage::from_raw(512, 64, vals),
            valid: MaskImage::from_fn(512, 64, |_, _| true),
        }
    }

    #[test]
    fn layout_and_determinism() {
        let n = noise_texture(1);
        let p = Gabor2dParams::default();
        let a = encode_gabor2d(&n, &p).unwrap();
        assert_eq!((a.rows(), a.cols()), (32 * 3 * 2, 256));
        assert_eq!(a, encode_gabor2d(&n, &p).unwrap());
    }

    #[test]
    fn kernel_real_part_is_dc_free() {
        for wl in [8.0, 16.0, 32.0] {
            let k = GaborKernel::new(wl, 64);
            assert!(k.re.iter().sum::<f64>().abs() < 1e-9);
            assert!(k.im.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn even_shift_equivariance() {
        let n = noise_texture(2);
        let p = Gabor2dParams::default();
        let a = encode_gabor2d(&n, &p).unwrap().shifted(5);
        let b = encode_gabor2d(&n.shift_columns(10), &p).unwrap();
        let mut disagree = 0;
        for r in 0..a.rows() {
            for c in 0..a.cols() {
                if a.valid(r, c) && b.valid(r, c) && a.bit(r, c) != b.bit(r, c) {
                    disagree += 1;
                }
            }
        }
        assert_eq!(disagree, 0);
    }

    #[test]
    fn noise_bits_balanced() {
        let code = encode_gabor2d(&noise_texture(3), &Gabor2dParams::default()).unwrap();
        let f = code.ones_fraction();
        assert!((0.45..=0.55).contains(&f), "{f}");
    }

    #[test]
    fn empty_wavelengths_rejected() {
        let p = Gabor2dParams { wavelengths: vec![] };
        assert!(encode_gabor2d(&noise_texture(0), &p).is_err());
    }
}
