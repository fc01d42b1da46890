use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{fnv1a, EncodeError, IrisCode};
use crate::error::{FormatError, PathIoError};
use crate::normalize::NormalizedIris;

pub const ENCODER_ID: &str = "kernelbank";

/// Mean magnitude below which a kernel counts as zero-mean, relative to its
/// largest coefficient.
const ZERO_MEAN_TOL: f32 = 1e-4;

/// A real 2D kernel with odd dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, FormatError> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(FormatError::new("kernel dims", format!("{rows}x{cols} is not odd")));
        }
        if data.len() != rows * cols {
            return Err(FormatError::new(
                "kernel dims",
                format!("{rows}x{cols} kernel with {} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Centred unit impulse.
    pub fn delta(rows: usize, cols: usize) -> Result<Self, FormatError> {
        let mut data = vec![0.0; rows * cols];
        if let Some(c) = data.get_mut((rows / 2) * cols + cols / 2) {
            *c = 1.0;
        }
        Self::new(rows, cols, data)
    }

    fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    fn is_zero_mean(&self) -> bool {
        let mean = self.data.iter().sum::<f32>() / self.data.len() as f32;
        let peak = self.data.iter().fold(0f32, |m, v| m.max(v.abs()));
        mean.abs() <= ZERO_MEAN_TOL * peak.max(f32::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernels: Vec<Kernel>,
    zero_mean: bool,
}

impl FilterBank {
    pub fn new(kernels: Vec<Kernel>, zero_mean: bool) -> Result<Self, FormatError> {
        if kernels.is_empty() {
            return Err(FormatError::new("empty bank", "a bank needs at least one kernel"));
        }
        if zero_mean {
            if let Some(i) = kernels.iter().position(|k| !k.is_zero_mean()) {
                return Err(FormatError::new("zero_mean", format!("kernel {i} has nonzero mean")));
            }
        }
        Ok(Self { kernels, zero_mean })
    }

    /// `count` Gaussian random kernels of `size × size`, mean removed and
    /// scaled to unit L2 norm.
    pub fn random(seed: u64, count: usize, size: usize) -> Result<Self, FormatError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
        let mut kernels = Vec::with_capacity(count);
        for _ in 0..count {
            let mut v: Vec<f64> = (0..size * size).map(|_| normal.sample(&mut rng)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            kernels.push(Kernel::new(size, size, v.iter().map(|x| (x / norm) as f32).collect())?);
        }
        Self::new(kernels, true)
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn zero_mean(&self) -> bool {
        self.zero_mean
    }

    pub fn params_hash(&self) -> u64 {
        let mut b = ENCODER_ID.as_bytes().to_vec();
        b.push(self.zero_mean as u8);
        for k in &self.kernels {
            b.extend((k.rows as u64).to_le_bytes());
            b.extend((k.cols as u64).to_le_bytes());
            for v in &k.data {
                b.extend(v.to_le_bytes());
            }
        }
        fnv1a(&b)
    }
}

/// One bit per kernel per texture sample: the sign of the kernel response on
/// the z-scored texture. Code row `k·rows + i` belongs to kernel `k`. A bit is
/// valid only when every sample under the kernel support is valid.
pub fn encode_kernelbank(n: &NormalizedIris, bank: &FilterBank) -> Result<IrisCode, EncodeError> {
    let (rows, cols) = (n.rows(), n.cols());
    for (i, k) in bank.kernels.iter().enumerate() {
        if k.rows > rows || k.cols > cols {
            return Err(EncodeError::Config(format!(
                "kernel {i} is {}x{}, texture is {rows}x{cols}",
                k.rows, k.cols
            )));
        }
    }
    let mut code = IrisCode::new(rows * bank.kernels.len(), cols, ENCODER_ID, bank.params_hash());

    let (mut sum, mut sq, mut cnt) = (0.0, 0.0, 0usize);
    for i in 0..rows {
        for j in 0..cols {
            if n.valid.get(j, i) {
                let v = n.texture.get(j, i);
                sum += v;
                sq += v * v;
                cnt += 1;
            }
        }
    }
    if cnt == 0 {
        return Ok(code);
    }
    let mean = sum / cnt as f64;
    let std = (sq / cnt as f64 - mean * mean).max(0.0).sqrt();
    let scale = if std > 0.0 { 1.0 / std } else { 0.0 };
    let z: Vec<f64> = (0..rows * cols)
        .map(|idx| {
            let (i, j) = (idx / cols, idx % cols);
            if n.valid.get(j, i) { (n.texture.get(j, i) - mean) * scale } else { 0.0 }
        })
        .collect();

    for (kidx, k) in bank.kernels.iter().enumerate() {
        let (hr, hc) = ((k.rows / 2) as i64, (k.cols / 2) as i64);
        let col_ok = column_support(n, hc as usize);
        for i in 0..rows {
            let r0 = (i as i64 - hr).max(0) as usize;
            let r1 = ((i as i64 + hr) as usize).min(rows - 1);
            for j in 0..cols {
                let ok = (r0..=r1).all(|r| col_ok[r * cols + j]);
                if !ok {
                    continue;
                }
                let mut acc = 0.0f64;
                for u in 0..k.rows {
                    let ri = (i as i64 + hr - u as i64).clamp(0, rows as i64 - 1) as usize;
                    let zr = &z[ri * cols..(ri + 1) * cols];
                    for v in 0..k.cols {
                        let cj = (j as i64 + hc - v as i64).rem_euclid(cols as i64) as usize;
                        acc += k.at(u, v) as f64 * zr[cj];
                    }
                }
                code.set(kidx * rows + i, j, acc > 0.0, true);
            }
        }
    }
    Ok(code)
}

/// `true` at (i, j) when every sample of row i within `half` columns of j,
/// circularly, is valid.
fn column_support(n: &NormalizedIris, half: usize) -> Vec<bool> {
    let (rows, cols) = (n.rows(), n.cols());
    let mut out = vec![false; rows * cols];
    for i in 0..rows {
        let invalid: Vec<bool> = (0..cols).map(|j| !n.valid.get(j, i)).collect();
        if !invalid.iter().any(|&b| b) {
            out[i * cols..(i + 1) * cols].fill(true);
            continue;
        }
        for j in 0..cols {
            out[i * cols + j] = (0..=2 * half).all(|d| !invalid[(j + cols + d - half) % cols]);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankHeader {
    count: usize,
    dims: Vec<[usize; 2]>,
    zero_mean: bool,
}

/// JSON header line `{count, dims, zero_mean}` followed by the kernels as
/// little-endian f32, row-major, in header order.
pub fn save_bank(path: impl AsRef<Path>, bank: &FilterBank) -> Result<(), EncodeError> {
    let path = path.as_ref();
    let header = BankHeader {
        count: bank.kernels.len(),
        dims: bank.kernels.iter().map(|k| [k.rows, k.cols]).collect(),
        zero_mean: bank.zero_mean,
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| FormatError::new("header", e.to_string()))?;
    out.push(b'\n');
    for k in &bank.kernels {
        for v in &k.data {
            out.extend(v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<FilterBank, EncodeError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PathIoError::new(path, e))?;
    Ok(decode_bank(&bytes)?)
}

pub(crate) fn decode_bank(bytes: &[u8]) -> Result<FilterBank, FormatError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::new("header", "unterminated header"))?;
    let header: BankHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| FormatError::new("header", e.to_string()))?;
    if header.count == 0 {
        return Err(FormatError::new("empty bank", "count is zero"));
    }
    if header.dims.len() != header.count {
        return Err(FormatError::new(
            "kernel dims",
            format!("count {} but {} dims entries", header.count, header.dims.len()),
        ));
    }
    let mut body = &bytes[nl + 1..];
    let mut kernels = Vec::with_capacity(header.count);
    for &[r, c] in &header.dims {
        if r % 2 == 0 || c % 2 == 0 {
            return Err(FormatError::new("kernel dims", format!("{r}x{c} is not odd")));
        }
        let need = r * c * 4;
        if body.len() < need {
            return Err(FormatError::new("truncated", format!("kernel {r}x{c} needs {need} bytes")));
        }
        let data = body[..need]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        kernels.push(Kernel::new(r, c, data)?);
        body = &body[need..];
    }
    if !body.is_empty() {
        return Err(FormatError::new("trailing", "unexpected bytes after last kernel"));
    }
    FilterBank::new(kernels, header.zero_mean)
}
