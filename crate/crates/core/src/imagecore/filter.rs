use super::{FloatImage, GrayImage};

/// Result of [`z_normalize`]. `degenerate` is set for constant inputs, whose
/// output is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ZNormalized {
    pub image: FloatImage,
    pub mean: f64,
    pub std: f64,
    pub degenerate: bool,
}

/// Zero mean, unit population variance.
pub fn z_normalize(img: &GrayImage) -> ZNormalized {
    let n = img.pixels().len() as f64;
    let mean = img.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
    let var = img
        .pixels()
        .iter()
        .map(|&p| {
            let d = p as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std == 0.0 {
        return ZNormalized {
            image: FloatImage::zeros(img.width(), img.height()),
            mean,
            std,
            degenerate: true,
        };
    }
    let values = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 - mean) / std)
        .collect();
    ZNormalized {
        image: FloatImage::from_raw(img.width(), img.height(), values),
        mean,
        std,
        degenerate: false,
    }
}

/// Normalized 1D Gaussian kernel truncated at ±3σ.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let half = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &FloatImage, sigma: f64) -> FloatImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let half = (k.len() / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let src = img.values();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x as i64 + j as i64 - half).clamp(0, w as i64 - 1) as usize;
                acc += kv * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let yy = (y as i64 + j as i64 - half).clamp(0, h as i64 - 1) as usize;
            let src_row = &tmp[yy * w..(yy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    FloatImage::from_raw(w, h, out)
}
