/// Packed binary mask, one bit per pixel in row-major order. A set bit marks
/// a usable pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn same_dims(&self, other: &MaskImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        let i = y * self.width + x;
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Lookup with signed coordinates; out-of-frame reads as unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and(&self, other: &MaskImage) -> MaskImage {
        assert!(self.same_dims(other), "mask dimensions differ");
        MaskImage {
            width: self.width,
            height: self.height,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn and_not(&self, other: &MaskImage) -> MaskImage {
        assert!(self.same_dims(other), "mask dimensions differ");
        MaskImage {
            width: self.width,
            height: self.height,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect(),
        }
    }

    pub fn or(&self, other: &MaskImage) -> MaskImage {
        assert!(self.same_dims(other), "mask dimensions differ");
        MaskImage {
            width: self.width,
            height: self.height,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
        }
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &MaskImage) -> bool {
        self.same_dims(other) && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Square-neighbourhood dilation with the given radius (Chebyshev).
    pub fn dilate(&self, radius: usize) -> MaskImage {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        // Separable: horizontal pass then vertical pass.
        let mut horiz = MaskImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let lo = (x as i64 - r).max(0) as usize;
                    let hi = ((x as i64 + r) as usize).min(self.width - 1);
                    for xx in lo..=hi {
                        horiz.set(xx, y, true);
                    }
                }
            }
        }
        let mut out = MaskImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if horiz.get(x, y) {
                    let lo = (y as i64 - r).max(0) as usize;
                    let hi = ((y as i64 + r) as usize).min(self.height - 1);
                    for yy in lo..=hi {
                        out.set(x, yy, true);
                    }
                }
            }
        }
        out
    }

    /// Bytes of a 0/255 grayscale rendering, handy for writing masks as images.
    pub fn to_gray(&self) -> super::GrayImage {
        let mut px = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                px.push(if self.get(x, y) { 255 } else { 0 });
            }
        }
        super::GrayImage::from_raw(self.width, self.height, px)
    }

    /// Any nonzero pixel counts as set.
    pub fn from_gray(img: &super::GrayImage) -> MaskImage {
        MaskImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) != 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_count() {
        let mut m = MaskImage::new(10, 7);
        m.set(9, 6, true);
        m.set(0, 0, true);
        assert!(m.get(9, 6) && m.get(0, 0) && !m.get(1, 0));
        assert_eq!(m.count(), 2);
        m.set(0, 0, false);
        assert_eq!(m.count(), 1);
    }

    #[test]
    fn dilation_is_square() {
        let mut m = MaskImage::new(9, 9);
        m.set(4, 4, true);
        let d = m.dilate(2);
        assert_eq!(d.count(), 25);
        assert!(d.get(2, 2) && d.get(6, 6) && !d.get(1, 4));
    }

    #[test]
    fn subset_relation() {
        let a = MaskImage::from_fn(5, 5, |x, _| x < 2);
        let b = MaskImage::from_fn(5, 5, |x, _| x < 3);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(b.and_not(&a).count(), 5);
    }
}
