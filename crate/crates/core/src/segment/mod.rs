//! Classical iris segmentation with a polarity-agnostic boundary operator.
//!
//! Adult-oriented segmenters assume a dark pupil. Infant NIR images often
//! show a pupil brighter than the iris, so [`SegmentMode::Infant`] maximizes
//! the *absolute* radial derivative of the circular mean intensity, while
//! [`SegmentMode::AdultLegacy`] keeps the signed dark-pupil assumption.

mod boundary;
mod occlusion;

pub use boundary::{find_boundary, ArcSet, BoundaryHit, BoundarySearch, Polarity, SearchRegion};
pub use occlusion::{annulus_mask, occlusion_refine, saturation_mask};

pub use crate::imagecore::MaskImage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{Circle, GrayImage};
use boundary::Prepared;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("no boundary: peak response {response:.2} below floor {floor:.2} gray levels/px")]
    NoBoundary { response: f64, floor: f64 },
    #[error("segmentation failed at {stage}: {reason}")]
    SegmentationFailed { stage: &'static str, reason: String },
    #[error("invalid search: {0}")]
    InvalidSearch(String),
}

/// Segmenter output. The same shape serves as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SegResult {
    pub pupil: Circle,
    pub iris: Circle,
    /// Set bits mark usable iris pixels.
    pub mask: MaskImage,
    pub confidence: f64,
}

impl SegResult {
    /// Full annulus mask, confidence 1.
    pub fn from_circles(pupil: Circle, iris: Circle, width: usize, height: usize) -> Self {
        Self {
            pupil,
            iris,
            mask: annulus_mask(&pupil, &iris, width, height),
            confidence: 1.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.pupil.r > 0.0 && self.iris.strictly_contains(&self.pupil)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    Infant,
    AdultLegacy,
}

impl std::str::FromStr for SegmentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "infant" => Ok(SegmentMode::Infant),
            "adult_legacy" => Ok(SegmentMode::AdultLegacy),
            other => Err(format!("unknown segmentation mode {other:?}")),
        }
    }
}

/// Tunables for [`segment`] and [`occlusion_refine`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub pupil_sigma: f64,
    pub iris_sigma: f64,
    /// Minimum accepted peak derivative, gray levels per pixel.
    pub response_floor: f64,
    pub pupil_radius_min: f64,
    pub pupil_radius_max: f64,
    /// Iris radius search range as multiples of the pupil radius.
    pub iris_ratio_min: f64,
    pub iris_ratio_max: f64,
    /// Iris centre must lie within this fraction of the pupil radius of the
    /// pupil centre.
    pub center_tolerance: f64,
    pub saturation_level: u8,
    pub highlight_dilation: usize,
    pub eyelid_sigma: f64,
    /// Minimum mean vertical derivative (gray levels/px) along a row for it
    /// to count as an eyelid edge.
    pub eyelid_threshold: f64,
    /// Extra rows removed beyond a detected eyelid edge.
    pub eyelid_margin: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            pupil_sigma: 2.0,
            iris_sigma: 4.0,
            response_floor: 5.0,
            pupil_radius_min: 20.0,
            pupil_radius_max: 90.0,
            iris_ratio_min: 1.5,
            iris_ratio_max: 5.0,
            center_tolerance: 0.25,
            saturation_level: 250,
            highlight_dilation: 2,
            eyelid_sigma: 1.5,
            eyelid_threshold: 6.0,
            eyelid_margin: 2,
        }
    }
}

pub const MIN_WIDTH: usize = 160;
pub const MIN_HEIGHT: usize = 120;

/// Locates pupil and iris boundaries and builds the occlusion mask.
pub fn segment(
    img: &GrayImage,
    mode: SegmentMode,
    cfg: &SegmentConfig,
) -> Result<SegResult, SegmentationError> {
    if img.width() < MIN_WIDTH || img.height() < MIN_HEIGHT {
        return Err(SegmentationError::InvalidSearch(format!(
            "image {}x{} smaller than {MIN_WIDTH}x{MIN_HEIGHT}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let r_cap = (w.min(h) / 2.0 - 1.0).floor();
    let pupil_search = BoundarySearch {
        region: SearchRegion::full(img.width(), img.height()),
        r_min: cfg.pupil_radius_min,
        r_max: cfg.pupil_radius_max.min(r_cap),
        polarity: match mode {
            SegmentMode::Infant => Polarity::Agnostic,
            SegmentMode::AdultLegacy => Polarity::Dark,
        },
        arcs: ArcSet::Full,
        sigma: cfg.pupil_sigma,
        response_floor: cfg.response_floor,
        saturation_level: cfg.saturation_level,
    };
    let prepared = Prepared::new(img, pupil_search.sigma, cfg.saturation_level);
    let pupil = boundary::search(&prepared, &pupil_search, None).map_err(|e| match e {
        SegmentationError::NoBoundary { .. } => SegmentationError::SegmentationFailed {
            stage: "pupil",
            reason: e.to_string(),
        },
        other => other,
    })?;

    let tol = cfg.center_tolerance * pupil.circle.r;
    let iris_search = BoundarySearch {
        region: SearchRegion::around(pupil.circle.cx, pupil.circle.cy, tol),
        r_min: (cfg.iris_ratio_min * pupil.circle.r).max(pupil.circle.r + 2.0),
        r_max: (cfg.iris_ratio_max * pupil.circle.r).min(r_cap),
        polarity: Polarity::Agnostic,
        arcs: ArcSet::Lateral,
        sigma: cfg.iris_sigma,
        response_floor: cfg.response_floor,
        saturation_level: cfg.saturation_level,
    };
    if iris_search.r_min >= iris_search.r_max {
        return Err(SegmentationError::SegmentationFailed {
            stage: "iris",
            reason: format!(
                "pupil radius {:.1} leaves no room for an iris in frame",
                pupil.circle.r
            ),
        });
    }
    let prepared = Prepared::new(img, iris_search.sigma, cfg.saturation_level);
    let iris = boundary::search(&prepared, &iris_search, Some((pupil.circle.cx, pupil.circle.cy, tol)))
        .map_err(|e| SegmentationError::SegmentationFailed {
            stage: "iris",
            reason: e.to_string(),
        })?;

    if !iris.circle.strictly_contains(&pupil.circle) {
        return Err(SegmentationError::SegmentationFailed {
            stage: "geometry",
            reason: "pupil not strictly inside iris".into(),
        });
    }
    let weakest = pupil.response.min(iris.response);
    let mut seg = SegResult::from_circles(pupil.circle, iris.circle, img.width(), img.height());
    seg.confidence = confidence_from_response(weakest);
    seg.mask = occlusion_refine(img, &seg, cfg);
    Ok(seg)
}

/// Monotone map of boundary response (gray levels/px) to `[0, 1)`.
pub fn confidence_from_response(response: f64) -> f64 {
    let r = response.max(0.0);
    r / (r + 10.0)
}
