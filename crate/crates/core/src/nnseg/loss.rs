use super::NnError;
use crate::imagecore::{FloatImage, MaskImage};

/// Predictions are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the loss.
pub const PROB_CLAMP: f64 = 1e-7;

fn check_dims(pred: &FloatImage, gt: &MaskImage) -> Result<(), NnError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(NnError::Shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

fn pairs<'a>(pred: &'a FloatImage, gt: &'a MaskImage) -> impl Iterator<Item = (f64, f64)> + 'a {
    let w = pred.width();
    pred.values().iter().enumerate().map(move |(i, &p)| {
        let g = if gt.get(i % w, i / w) { 1.0 } else { 0.0 };
        (p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP), g)
    })
}

/// `1 − (2Σpg + 1)/(Σp + Σg + 1)` on clamped predictions.
pub fn dice_term(pred: &FloatImage, gt: &MaskImage) -> Result<f64, NnError> {
    check_dims(pred, gt)?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (p, g) in pairs(pred, gt) {
        inter += p * g;
        sp += p;
        sg += g;
    }
    Ok(1.0 - (2.0 * inter + 1.0) / (sp + sg + 1.0))
}

/// Mean binary cross-entropy plus `lambda` times the dice term.
pub fn ce_dice_loss(pred: &FloatImage, gt: &MaskImage, lambda: f64) -> Result<f64, NnError> {
    check_dims(pred, gt)?;
    let n = pred.values().len();
    if n == 0 {
        return Err(NnError::Shape("empty prediction".into()));
    }
    let ce = -pairs(pred, gt)
        .map(|(p, g)| g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        .sum::<f64>()
        / n as f64;
    Ok(ce + lambda * dice_term(pred, gt)?)
}

/// Analytic gradient of [`dice_term`] with respect to each prediction,
/// ignoring the clamp.
pub fn dice_grad(pred: &FloatImage, gt: &MaskImage) -> Result<Vec<f64>, NnError> {
    check_dims(pred, gt)?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (p, g) in pairs(pred, gt) {
        inter += p * g;
        sp += p;
        sg += g;
    }
    let s = sp + sg + 1.0;
    let num = 2.0 * inter + 1.0;
    Ok(pairs(pred, gt).map(|(_, g)| -(2.0 * g * s - num) / (s * s)).collect())
}

/// `|a ∩ b| / |a ∪ b|`, and 1 when both are empty.
pub fn iou(a: &MaskImage, b: &MaskImage) -> Result<f64, NnError> {
    if !a.same_dims(b) {
        return Err(NnError::Shape(format!(
            "masks {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let union = a.or(b).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(a.and(b).count() as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img2x2(v: [f64; 4]) -> FloatImage {
        FloatImage::from_raw(2, 2, v.to_vec())
    }

    fn mask2x2(v: [bool; 4]) -> MaskImage {
        MaskImage::from_fn(2, 2, |x, y| v[y * 2 + x])
    }

    #[test]
    fn hand_case() {
        let p = img2x2([0.9, 0.1, 0.8, 0.2]);
        let g = mask2x2([true, false, true, false]);
        let ce = -(0.9f64.ln() + 0.9f64.ln() + 0.8f64.ln() + 0.8f64.ln()) / 4.0;
        let dice = 1.0 - (2.0 * 1.7 + 1.0) / (2.0 + 2.0 + 1.0);
        assert!((ce_dice_loss(&p, &g, 1.0).unwrap() - (ce + dice)).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_inverted() {
        let g = mask2x2([true, false, false, true]);
        let p = img2x2([1.0, 0.0, 0.0, 1.0]);
        assert!(dice_term(&p, &g).unwrap().abs() < 1e-6);
        assert!(ce_dice_loss(&p, &g, 1.0).unwrap() < 1e-6);
        let inv = img2x2([0.0, 1.0, 1.0, 0.0]);
        assert!(dice_term(&inv, &g).unwrap() > 0.79);
        assert!(ce_dice_loss(&inv, &g, 1.0).unwrap() > 10.0);
    }

    #[test]
    fn dice_gradient_matches_finite_difference() {
        let p = [0.9, 0.1, 0.8, 0.2];
        let g = mask2x2([true, false, true, false]);
        let grad = dice_grad(&img2x2(p), &g).unwrap();
        let h = 1e-5;
        for k in 0..4 {
            let (mut up, mut dn) = (p, p);
            up[k] += h;
            dn[k] -= h;
            let fd = (dice_term(&img2x2(up), &g).unwrap() - dice_term(&img2x2(dn), &g).unwrap()) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-4, "k {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn iou_cases() {
        let a = MaskImage::from_fn(4, 4, |x, y| y == 0 && x < 4);
        let b = MaskImage::from_fn(4, 4, |x, y| y == 0 && x >= 2 || y == 1 && x < 2);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let c = MaskImage::from_fn(4, 4, |_, y| y == 3);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        let e = MaskImage::new(4, 4);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert!(iou(&a, &MaskImage::new(3, 3)).is_err());
    }

    #[test]
    fn dims_checked() {
        assert!(ce_dice_loss(&FloatImage::zeros(3, 2), &MaskImage::new(2, 2), 1.0).is_err());
    }
}
