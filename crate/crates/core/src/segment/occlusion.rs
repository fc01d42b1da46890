use super::{SegResult, SegmentConfig};
use crate::imagecore::{gaussian_blur, Circle, FloatImage, GrayImage, MaskImage};

/// Pixels whose centres are inside `iris` and outside `pupil`.
pub fn annulus_mask(pupil: &Circle, iris: &Circle, width: usize, height: usize) -> MaskImage {
    let mut m = MaskImage::new(width, height);
    let y0 = (iris.cy - iris.r).floor().max(0.0) as usize;
    let y1 = ((iris.cy + iris.r).ceil().max(0.0) as usize).min(height - 1);
    let x0 = (iris.cx - iris.r).floor().max(0.0) as usize;
    let x1 = ((iris.cx + iris.r).ceil().max(0.0) as usize).min(width - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (fx, fy) = (x as f64, y as f64);
            if iris.contains(fx, fy) && !pupil.contains(fx, fy) {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Pixels at or above `level`, dilated by `dilation`.
pub fn saturation_mask(img: &GrayImage, level: u8, dilation: usize) -> MaskImage {
    MaskImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) >= level).dilate(dilation)
}

/// Removes specular highlights and eyelid regions from the segmentation's
/// annulus. The result is always a subset of the annulus.
pub fn occlusion_refine(img: &GrayImage, seg: &SegResult, cfg: &SegmentConfig) -> MaskImage {
    let (w, h) = (img.width(), img.height());
    let annulus = annulus_mask(&seg.pupil, &seg.iris, w, h);
    let base = if seg.mask.same_dims(&annulus) {
        annulus.and(&seg.mask)
    } else {
        annulus
    };
    let highlights = saturation_mask(img, cfg.saturation_level, cfg.highlight_dilation);
    let mut mask = base.and_not(&highlights);

    let smooth = gaussian_blur(&img.to_float(), cfg.eyelid_sigma);
    let (top, bottom) = eyelid_rows(&smooth, &highlights, seg, cfg);
    if let Some(top) = top {
        let last = (top + cfg.eyelid_margin).min(h - 1);
        for y in 0..=last {
            for x in 0..w {
                mask.set(x, y, false);
            }
        }
    }
    if let Some(bottom) = bottom {
        let first = bottom.saturating_sub(cfg.eyelid_margin);
        for y in first..h {
            for x in 0..w {
                mask.set(x, y, false);
            }
        }
    }
    mask
}

/// Rows of strongest horizontal-edge energy above and below the pupil, if
/// they exceed the eyelid threshold.
fn eyelid_rows(
    smooth: &FloatImage,
    exclude: &MaskImage,
    seg: &SegResult,
    cfg: &SegmentConfig,
) -> (Option<usize>, Option<usize>) {
    let (w, h) = (smooth.width() as i64, smooth.height() as i64);
    let iris = seg.iris;
    let pupil = seg.pupil;
    let half_span = 0.4 * iris.r;
    let x0 = ((iris.cx - half_span).ceil() as i64).max(0);
    let x1 = ((iris.cx + half_span).floor() as i64).min(w - 1);
    // Rows where the iris boundary itself is nearly horizontal are skipped.
    let reach = iris.r * (1.0 - 0.4f64.powi(2)).sqrt();
    let energy = |y: i64| -> Option<f64> {
        if y < 1 || y >= h - 1 || x1 < x0 {
            return None;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for x in x0..=x1 {
            if exclude.get_signed(x, y - 1) || exclude.get_signed(x, y + 1) {
                continue;
            }
            let (xu, yu) = (x as usize, y as usize);
            sum += (smooth.get(xu, yu + 1) - smooth.get(xu, yu - 1)) / 2.0;
            n += 1;
        }
        (2 * n > (x1 - x0 + 1) as usize).then(|| (sum / n as f64).abs())
    };
    let best_in = |lo: f64, hi: f64| -> Option<usize> {
        let (lo, hi) = (lo.ceil() as i64, hi.floor() as i64);
        let mut best: Option<(f64, i64)> = None;
        for y in lo..=hi {
            if let Some(e) = energy(y) {
                if best.is_none_or(|(b, _)| e > b) {
                    best = Some((e, y));
                }
            }
        }
        best.filter(|&(e, _)| e >= cfg.eyelid_threshold)
            .map(|(_, y)| y as usize)
    };
    let top = best_in(iris.cy - reach, pupil.cy - pupil.r - 3.0);
    let bottom = best_in(pupil.cy + pupil.r + 3.0, iris.cy + reach);
    (top, bottom)
}
