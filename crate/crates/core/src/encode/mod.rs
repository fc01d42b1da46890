//! Binary iris-code encoders over normalized textures.
//!
//! Three families are provided: a 1D log-Gabor filter along the angular
//! axis, quadrature 2D Gabor phase quantization at several scales, and
//! sign-of-response coding with an arbitrary loadable kernel bank.

mod bank;
mod code;
mod gabor2d;
mod loggabor;

pub use bank::{encode_kernelbank, load_bank, save_bank, FilterBank, Kernel};
pub use code::{read_code, write_code, CodeMeta, IrisCode};
pub use gabor2d::{encode_gabor2d, Gabor2dParams};
pub use loggabor::{encode_loggabor1d, LogGaborParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{FormatError, PathIoError};
use crate::normalize::NormalizedIris;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("encoder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] PathIoError),
}

/// Responses smaller than this fraction of the row RMS carry no reliable
/// phase and are masked.
pub const NEAR_ZERO_FRACTION: f64 = 1e-3;
/// Absolute floor for the near-zero test, in texture units.
pub const NEAR_ZERO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Loggabor1d,
    Gabor2d,
    Bank,
}

impl std::str::FromStr for EncoderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loggabor1d" => Ok(EncoderKind::Loggabor1d),
            "gabor2d" => Ok(EncoderKind::Gabor2d),
            "bank" => Ok(EncoderKind::Bank),
            other => Err(format!("unknown encoder {other:?}")),
        }
    }
}

/// Encoder selection with its parameters.
#[derive(Debug, Clone)]
pub enum Encoder {
    LogGabor(LogGaborParams),
    Gabor2d(Gabor2dParams),
    Bank(FilterBank),
}

impl Encoder {
    pub fn encode(&self, n: &NormalizedIris) -> Result<IrisCode, EncodeError> {
        match self {
            Encoder::LogGabor(p) => Ok(encode_loggabor1d(n, p)),
            Encoder::Gabor2d(p) => encode_gabor2d(n, p),
            Encoder::Bank(b) => encode_kernelbank(n, b),
        }
    }
}

/// FNV-1a, 64-bit. Stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-row mean of valid texture values, used to fill invalid samples so the
/// filters see no artificial edges. `None` when the row has no valid sample.
pub(crate) fn filled_rows(n: &NormalizedIris) -> Vec<Option<Vec<f64>>> {
    (0..n.rows())
        .map(|i| {
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for j in 0..n.cols() {
                if n.valid.get(j, i) {
                    sum += n.texture.get(j, i);
                    cnt += 1;
                }
            }
            (cnt > 0).then(|| {
                let mean = sum / cnt as f64;
                (0..n.cols())
                    .map(|j| if n.valid.get(j, i) { n.texture.get(j, i) } else { mean })
                    .collect()
            })
        })
        .collect()
}

pub(crate) fn near_zero_threshold(magnitudes: impl Iterator<Item = f64>) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for m in magnitudes {
        sq += m * m;
        n += 1;
    }
    let rms = if n > 0 { (sq / n as f64).sqrt() } else { 0.0 };
    (NEAR_ZERO_FRACTION * rms).max(NEAR_ZERO_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn encoder_names() {
        assert_eq!("gabor2d".parse::<EncoderKind>().unwrap(), EncoderKind::Gabor2d);
        assert!("bsif".parse::<EncoderKind>().is_err());
    }
}
