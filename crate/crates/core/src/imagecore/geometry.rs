use super::{FloatImage, GrayImage, MaskImage};

/// Rotation centre of a `width`×`height` frame.
fn frame_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Where the content at `(x, y)` lands after rotating a `width`×`height`
/// frame by `degrees` counterclockwise (as seen on screen) about its centre.
pub fn rotate_point(x: f64, y: f64, width: usize, height: usize, degrees: f64) -> (f64, f64) {
    let (cx, cy) = frame_center(width, height);
    let (s, c) = degrees.to_radians().sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + dx * c + dy * s, cy - dx * s + dy * c)
}

/// Inverse of [`rotate_point`]: the source position feeding output `(x, y)`.
fn source_point(x: f64, y: f64, cx: f64, cy: f64, s: f64, c: f64) -> (f64, f64) {
    let (dx, dy) = (x - cx, y - cy);
    (snap(cx + dx * c - dy * s), snap(cy + dx * s + dy * c))
}

/// Rotates counterclockwise by `degrees` about the frame centre with bilinear
/// resampling. Samples that fall outside the source frame become 0.
pub fn rotate(img: &GrayImage, degrees: f64) -> GrayImage {
    assert!(degrees.abs() <= 180.0, "rotation must be within ±180°");
    if degrees == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = frame_center(w, h);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = GrayImage::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source_point(x as f64, y as f64, cx, cy, s, c);
            if let Some(v) = img.sample(sx, sy) {
                out.set(x, y, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Nearest-neighbour counterpart of [`rotate`] for masks.
pub fn rotate_mask(mask: &MaskImage, degrees: f64) -> MaskImage {
    if degrees == 0.0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let (cx, cy) = frame_center(w, h);
    let (s, c) = degrees.to_radians().sin_cos();
    MaskImage::from_fn(w, h, |x, y| {
        let (sx, sy) = source_point(x as f64, y as f64, cx, cy, s, c);
        mask.get_signed(sx.round() as i64, sy.round() as i64)
    })
}

/// Bilinear resize with half-pixel centres; edge samples are clamped.
pub fn resize_bilinear(img: &FloatImage, width: usize, height: usize) -> FloatImage {
    let (sw, sh) = (img.width(), img.height());
    if sw == width && sh == height {
        return img.clone();
    }
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let xs: Vec<(usize, usize, f64)> = (0..width)
        .map(|x| axis_taps(x, sx, sw))
        .collect();
    let mut out = FloatImage::zeros(width, height);
    for y in 0..height {
        let (y0, y1, fy) = axis_taps(y, sy, sh);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            out.set(x, y, top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn axis_taps(i: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, src - i0 as f64)
}
