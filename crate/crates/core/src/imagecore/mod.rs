//! Raster types and the geometric/intensity primitives shared by every stage.
//!
//! [`GrayImage`] is the 8-bit carrier used for storage and for everything the
//! sensor would produce. [`FloatImage`] holds derived real-valued planes
//! (normalized intensities, filter responses, probability maps).
//! [`MaskImage`] is a packed 1-bit validity plane.

mod filter;
mod geometry;
mod io;
mod mask;

pub use filter::{gaussian_blur, gaussian_kernel, z_normalize, ZNormalized};
pub use geometry::{resize_bilinear, rotate, rotate_mask, rotate_point};
pub use io::{load_image, save_image, FormatError, ImageError};
pub use mask::MaskImage;

use serde::{Deserialize, Serialize};

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Panics if either dimension is zero or the buffer length is wrong.
    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(pixels.len(), width * height, "pixel buffer length");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::from_raw(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Bilinear sample at sub-pixel coordinates; `None` when any of the four
    /// taps falls outside the frame.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(self.width, self.height, x, y, |i| self.pixels[i] as f64)
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage::from_raw(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| p as f64).collect(),
        )
    }
}

/// Row-major real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl FloatImage {
    pub fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(values.len(), width * height, "value buffer length");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_raw(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(self.width, self.height, x, y, |i| self.values[i])
    }

    /// Rounds and clamps to 8 bits.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(
            self.width,
            self.height,
            self.values
                .iter()
                .map(|&v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        )
    }
}

#[inline]
fn bilinear(
    width: usize,
    height: usize,
    x: f64,
    y: f64,
    at: impl Fn(usize) -> f64,
) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    if x0 >= width || y0 >= height {
        return None;
    }
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    // Exact integer coordinates on the last row/column are still in frame.
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    if x1 >= width || y1 >= height {
        return None;
    }
    let i00 = at(y0 * width + x0);
    let i10 = at(y0 * width + x1);
    let i01 = at(y1 * width + x0);
    let i11 = at(y1 * width + x1);
    let top = i00 + (i10 - i00) * fx;
    let bottom = i01 + (i11 - i01) * fx;
    Some(top + (bottom - top) * fy)
}

/// A circle in image coordinates (x right, y down), sub-pixel precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        dx * dx + dy * dy < self.r * self.r
    }

    pub fn center_distance(&self, other: &Circle) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }

    /// True when `inner` lies strictly inside `self`.
    pub fn strictly_contains(&self, inner: &Circle) -> bool {
        inner.r > 0.0 && self.center_distance(inner) + inner.r < self.r
    }

    /// Point on the circle at angle `theta` (radians, counterclockwise from
    /// the positive x-axis as seen on screen).
    pub fn point_at(&self, theta: f64) -> (f64, f64) {
        (
            self.cx + self.r * theta.cos(),
            self.cy - self.r * theta.sin(),
        )
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cx, self.cy, self.r]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_midpoint() {
        let img = GrayImage::from_raw(2, 2, vec![0, 100, 100, 200]);
        assert_eq!(img.sample(0.5, 0.5), Some(100.0));
        assert_eq!(img.sample(1.0, 1.0), Some(200.0));
        assert_eq!(img.sample(1.5, 0.0), None);
        assert_eq!(img.sample(-0.1, 0.0), None);
    }

    #[test]
    fn circle_containment() {
        let outer = Circle::new(10.0, 10.0, 8.0);
        assert!(outer.strictly_contains(&Circle::new(11.0, 10.0, 4.0)));
        assert!(!outer.strictly_contains(&Circle::new(14.0, 10.0, 4.0)));
    }

    #[test]
    #[should_panic(expected = "pixel buffer length")]
    fn rejects_short_buffer() {
        GrayImage::from_raw(3, 3, vec![0; 8]);
    }
}
