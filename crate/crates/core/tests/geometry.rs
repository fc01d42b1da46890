use infiris::imagecore::{rotate, rotate_mask, rotate_point};
use infiris::normalize::rubber_sheet;
use infiris::segment::segment;
use infiris::synth::{render_eye, SessionVariation};
use infiris::{Circle, CorpusConfig, EyeAnnotation, MaskImage, PupilPolarity, SegResult, SegmentConfig, SegmentMode};

fn corpus(polarity: PupilPolarity) -> CorpusConfig {
    CorpusConfig {
        polarity,
        base_seed: 31,
        ..CorpusConfig::default()
    }
}

/// Worst boundary error (centre offset or radius difference, either circle)
/// relative to the true iris radius.
fn relative_error(found: &SegResult, truth: &EyeAnnotation) -> f64 {
    let d = |a: &Circle, b: &Circle| a.center_distance(b).max((a.r - b.r).abs());
    d(&found.pupil, &truth.pupil).max(d(&found.iris, &truth.iris)) / truth.iris.r
}

fn circle_shift(a: &SegResult, b: &SegResult) -> f64 {
    let d = |a: &Circle, b: &Circle| a.center_distance(b).max((a.r - b.r).abs());
    d(&a.pupil, &b.pupil).max(d(&a.iris, &b.iris))
}

#[test]
fn infant_mode_locates_both_polarities() {
    let cfg = SegmentConfig::default();
    for polarity in [PupilPolarity::BrightPupil, PupilPolarity::DarkPupil] {
        let c = corpus(polarity);
        for s in 0..6 {
            let (img, ann) = render_eye(&c.spec_for(s, s % 3)).unwrap();
            let seg = segment(&img, SegmentMode::Infant, &cfg).unwrap();
            let e = relative_error(&seg, &ann);
            assert!(e <= 0.02, "{polarity:?} subject {s}: error {e:.4}");
        }
    }
}

#[test]
fn polarity_inversion_keeps_circles() {
    let cfg = SegmentConfig::default();
    let c = corpus(PupilPolarity::BrightPupil);
    for s in 0..4 {
        let bright = c.spec_for(s, 1);
        let dark = infiris::EyeSpec {
            polarity: PupilPolarity::DarkPupil,
            ..bright.clone()
        };
        let (ib, ab) = render_eye(&bright).unwrap();
        let (id, ad) = render_eye(&dark).unwrap();
        assert_eq!((ab.pupil, ab.iris), (ad.pupil, ad.iris));
        let sb = segment(&ib, SegmentMode::Infant, &cfg).unwrap();
        let sd = segment(&id, SegmentMode::Infant, &cfg).unwrap();
        assert!(circle_shift(&sb, &sd) <= 2.0, "subject {s}: {:.2} px", circle_shift(&sb, &sd));
    }
}

#[test]
fn legacy_mode_matches_infant_on_dark_pupils() {
    let cfg = SegmentConfig::default();
    let c = corpus(PupilPolarity::DarkPupil);
    for s in 0..4 {
        let (img, _) = render_eye(&c.spec_for(s, 2)).unwrap();
        let a = segment(&img, SegmentMode::Infant, &cfg).unwrap();
        let b = segment(&img, SegmentMode::AdultLegacy, &cfg).unwrap();
        assert!(circle_shift(&a, &b) <= 1.0, "subject {s}: {:.2} px", circle_shift(&a, &b));
    }
}

#[test]
fn legacy_mode_breaks_on_bright_pupils() {
    let cfg = SegmentConfig::default();
    let c = corpus(PupilPolarity::BrightPupil);
    let n = 10;
    let bad = (0..n)
        .filter(|&s| {
            let (img, ann) = render_eye(&c.spec_for(s, 0)).unwrap();
            match segment(&img, SegmentMode::AdultLegacy, &cfg) {
                Err(_) => true,
                Ok(seg) => seg.pupil.center_distance(&ann.pupil) > 0.1 * ann.iris.r,
            }
        })
        .count();
    assert!(2 * bad >= n, "only {bad}/{n} legacy segmentations went wrong");
}

fn erode(mask: &MaskImage, radius: usize) -> MaskImage {
    let full = MaskImage::from_fn(mask.width(), mask.height(), |_, _| true);
    full.and_not(&full.and_not(mask).dilate(radius))
}

/// Rotating the eye by 10° shifts the normalized texture by 16 of 576
/// columns. Sensor noise is off: it is not rotated with the eye, so it would
/// dominate any per-pixel bound.
#[test]
fn rubber_sheet_rotation_is_a_column_shift() {
    let c = CorpusConfig {
        variation: SessionVariation {
            noise_sigma: 0.0,
            ..SessionVariation::default()
        },
        ..corpus(PupilPolarity::BrightPupil)
    };
    let (theta, rows, cols) = (10.0, 64, 576);
    let k = (theta * cols as f64 / 360.0).round() as i64;
    for s in 0..3 {
        let (img, ann) = render_eye(&c.spec_for(s, 0)).unwrap();
        let (w, h) = (img.width(), img.height());
        let mv = |c: &Circle| {
            let (x, y) = rotate_point(c.cx, c.cy, w, h, theta);
            Circle::new(x, y, c.r)
        };
        let mask = erode(&ann.occlusion, 3);
        let seg = SegResult {
            mask: mask.clone(),
            ..SegResult::from_circles(ann.pupil, ann.iris, w, h)
        };
        let rseg = SegResult {
            mask: rotate_mask(&mask, theta),
            ..SegResult::from_circles(mv(&ann.pupil), mv(&ann.iris), w, h)
        };
        let a = rubber_sheet(&img, &seg, rows, cols).unwrap().shift_columns(k);
        let b = rubber_sheet(&rotate(&img, theta), &rseg, rows, cols).unwrap();
        let mut checked = 0;
        for i in 0..rows {
            for j in 0..cols {
                if a.valid.get(j, i) && b.valid.get(j, i) {
                    let d = (a.texture.get(j, i) - b.texture.get(j, i)).abs();
                    assert!(d <= 3.0, "subject {s} cell ({i},{j}): {d:.2}");
                    checked += 1;
                }
            }
        }
        assert!(checked > rows * cols / 2);
    }
}
