use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EncodeError;
use crate::error::{FormatError, PathIoError};

const MAGIC: &[u8] = b"IRCD1\n";

/// Bit-packed iris code with a validity mask of the same shape.
///
/// Each row is stored in `ceil(cols / 64)` words, bit `c` of a row at word
/// `c / 64`, position `c % 64`. Padding bits are always zero in both planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisCode {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    mask: Vec<u64>,
    pub encoder_id: String,
    pub params_hash: u64,
}

impl IrisCode {
    pub fn new(rows: usize, cols: usize, encoder_id: impl Into<String>, params_hash: u64) -> Self {
        assert!(rows > 0 && cols > 0, "code dimensions must be positive");
        let words_per_row = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
            mask: vec![0; rows * words_per_row],
            encoder_id: encoder_id.into(),
            params_hash,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn total_bits(&self) -> usize {
        self.rows * self.cols
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn bit_words(&self) -> &[u64] {
        &self.bits
    }

    pub fn mask_words(&self) -> &[u64] {
        &self.mask
    }

    #[inline]
    fn index(&self, r: usize, c: usize) -> (usize, u32) {
        debug_assert!(r < self.rows && c < self.cols);
        (r * self.words_per_row + c / 64, (c % 64) as u32)
    }

    #[inline]
    pub fn bit(&self, r: usize, c: usize) -> bool {
        let (w, b) = self.index(r, c);
        self.bits[w] >> b & 1 == 1
    }

    #[inline]
    pub fn valid(&self, r: usize, c: usize) -> bool {
        let (w, b) = self.index(r, c);
        self.mask[w] >> b & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, bit: bool, valid: bool) {
        let (w, b) = self.index(r, c);
        let m = 1u64 << b;
        if bit {
            self.bits[w] |= m;
        } else {
            self.bits[w] &= !m;
        }
        if valid {
            self.mask[w] |= m;
        } else {
            self.mask[w] &= !m;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Fraction of valid bits that are set.
    pub fn ones_fraction(&self) -> f64 {
        let ones: usize = self
            .bits
            .iter()
            .zip(&self.mask)
            .map(|(b, m)| (b & m).count_ones() as usize)
            .sum();
        ones as f64 / self.valid_count().max(1) as f64
    }

    pub fn same_layout(&self, other: &IrisCode) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.encoder_id == other.encoder_id
            && self.params_hash == other.params_hash
    }

    /// Circular column shift: column `c` of the result is column
    /// `c - k (mod cols)` of `self`, for both planes.
    pub fn shifted(&self, k: i64) -> IrisCode {
        let mut out = self.clone();
        self.shift_into(k, &mut out);
        out
    }

    /// Like [`IrisCode::shifted`] but reuses `out`'s buffers. `out` must have
    /// the same layout.
    pub fn shift_into(&self, k: i64, out: &mut IrisCode) {
        let k = k.rem_euclid(self.cols as i64) as usize;
        if k == 0 {
            out.bits.copy_from_slice(&self.bits);
            out.mask.copy_from_slice(&self.mask);
            return;
        }
        let wpr = self.words_per_row;
        for r in 0..self.rows {
            let range = r * wpr..(r + 1) * wpr;
            if self.cols.is_multiple_of(64) {
                rotate_words(&self.bits[range.clone()], k, &mut out.bits[range.clone()]);
                rotate_words(&self.mask[range.clone()], k, &mut out.mask[range]);
            } else {
                rotate_bits(&self.bits[range.clone()], self.cols, k, &mut out.bits[range.clone()]);
                rotate_bits(&self.mask[range.clone()], self.cols, k, &mut out.mask[range]);
            }
        }
    }
}

/// Rotates a bit ring whose length is a whole number of words, moving bit
/// `i` to `i + k`.
fn rotate_words(src: &[u64], k: usize, dst: &mut [u64]) {
    let n = src.len();
    let total = n * 64;
    for (w, d) in dst.iter_mut().enumerate() {
        let start = (w * 64 + total - k) % total;
        let (sw, off) = (start / 64, start % 64);
        *d = if off == 0 {
            src[sw]
        } else {
            (src[sw] >> off) | (src[(sw + 1) % n] << (64 - off))
        };
    }
}

fn rotate_bits(src: &[u64], cols: usize, k: usize, dst: &mut [u64]) {
    dst.iter_mut().for_each(|d| *d = 0);
    for c in 0..cols {
        let s = (c + cols - k) % cols;
        if src[s / 64] >> (s % 64) & 1 == 1 {
            dst[c / 64] |= 1 << (c % 64);
        }
    }
}

/// Header fields stored alongside a code on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeMeta {
    pub rows: usize,
    pub cols: usize,
    pub encoder_id: String,
    pub params_hash: u64,
    pub subject_id: String,
    pub sample_id: String,
}

/// Writes `IRCD1\n`, a one-line JSON header, then the bit rows and mask rows,
/// each row padded to a byte boundary (bit `c` at byte `c / 8`, LSB first).
pub fn write_code(path: impl AsRef<Path>, code: &IrisCode, subject_id: &str, sample_id: &str) -> Result<(), EncodeError> {
    let path = path.as_ref();
    let meta = CodeMeta {
        rows: code.rows,
        cols: code.cols,
        encoder_id: code.encoder_id.clone(),
        params_hash: code.params_hash,
        subject_id: subject_id.into(),
        sample_id: sample_id.into(),
    };
    let mut out = MAGIC.to_vec();
    out.extend(serde_json::to_vec(&meta).map_err(|e| FormatError::new("header", e.to_string()))?);
    out.push(b'\n');
    let bytes_per_row = code.cols.div_ceil(8);
    for plane in [&code.bits, &code.mask] {
        for r in 0..code.rows {
            let row = &plane[r * code.words_per_row..(r + 1) * code.words_per_row];
            for b in 0..bytes_per_row {
                out.push((row[b / 8] >> ((b % 8) * 8)) as u8);
            }
        }
    }
    fs::write(path, out).map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

pub fn read_code(path: impl AsRef<Path>) -> Result<(IrisCode, CodeMeta), EncodeError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PathIoError::new(path, e))?;
    Ok(decode_code(&bytes)?)
}

pub(crate) fn decode_code(bytes: &[u8]) -> Result<(IrisCode, CodeMeta), FormatError> {
    if !bytes.starts_with(MAGIC) {
        return Err(FormatError::new("magic", "expected IRCD1"));
    }
    let rest = &bytes[MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::new("header", "unterminated header"))?;
    let meta: CodeMeta = serde_json::from_slice(&rest[..nl])
        .map_err(|e| FormatError::new("header", e.to_string()))?;
    if meta.rows == 0 || meta.cols == 0 {
        return Err(FormatError::new("header", "zero code dimensions"));
    }
    let body = &rest[nl + 1..];
    let bytes_per_row = meta.cols.div_ceil(8);
    let need = 2 * meta.rows * bytes_per_row;
    if body.len() < need {
        return Err(FormatError::new("truncated", format!("need {need} bytes, found {}", body.len())));
    }
    if body.len() > need {
        return Err(FormatError::new("trailing", "unexpected bytes after mask"));
    }
    let mut code = IrisCode::new(meta.rows, meta.cols, meta.encoder_id.clone(), meta.params_hash);
    let wpr = code.words_per_row;
    let pad_mask = if meta.cols.is_multiple_of(64) { u64::MAX } else { (1u64 << (meta.cols % 64)) - 1 };
    for (p, plane) in [&mut code.bits, &mut code.mask].into_iter().enumerate() {
        for r in 0..meta.rows {
            let src = &body[(p * meta.rows + r) * bytes_per_row..][..bytes_per_row];
            let row = &mut plane[r * wpr..(r + 1) * wpr];
            for (b, &byte) in src.iter().enumerate() {
                row[b / 8] |= (byte as u64) << ((b % 8) * 8);
            }
            row[wpr - 1] &= pad_mask;
        }
    }
    Ok((code, meta))
}
