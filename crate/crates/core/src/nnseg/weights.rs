use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::error::{FormatError, PathIoError};

const MAGIC: &[u8] = b"NNSEG1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// `[out, in, 3, 3]`: one kernel used by both branches.
    SharedAtrousConv,
    /// `[4, C]`: gamma, beta, running mean, running variance.
    BatchNorm,
    /// `[out, in + 1]`: weights with the bias in the last column.
    PointwiseConv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkWeights {
    pub layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    name: String,
    kind: LayerKind,
    shape: Vec<usize>,
    /// Byte offset into the blob region.
    offset: usize,
    /// Byte length of the blob.
    length: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    layers: Vec<HeaderRecord>,
}

/// `NNSEG1\n`, a JSON header line, the little-endian f32 blobs, then the
/// CRC-32 of the blob region as a little-endian u32.
pub fn encode_weights(w: &NetworkWeights) -> Vec<u8> {
    let mut blobs = Vec::new();
    let mut records = Vec::with_capacity(w.layers.len());
    for l in &w.layers {
        let offset = blobs.len();
        for v in &l.data {
            blobs.extend(v.to_le_bytes());
        }
        records.push(HeaderRecord {
            name: l.name.clone(),
            kind: l.kind,
            shape: l.shape.clone(),
            offset,
            length: blobs.len() - offset,
        });
    }
    let mut out = MAGIC.to_vec();
    out.extend(serde_json::to_vec(&Header { layers: records }).expect("header serializes"));
    out.push(b'\n');
    let crc = crc32fast::hash(&blobs);
    out.extend(blobs);
    out.extend(crc.to_le_bytes());
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetworkWeights, FormatError> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| FormatError::new("magic", "expected NNSEG1"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::new("header", "unterminated header"))?;
    let header: Header =
        serde_json::from_slice(&rest[..nl]).map_err(|e| FormatError::new("header", e.to_string()))?;
    let body = &rest[nl + 1..];
    let declared = header.layers.iter().map(|r| r.offset + r.length).max().unwrap_or(0);
    if body.len() < declared + 4 {
        return Err(FormatError::new(
            "truncated",
            format!("blobs need {} bytes plus checksum, found {}", declared, body.len()),
        ));
    }
    if body.len() > declared + 4 {
        return Err(FormatError::new("trailing", "unexpected bytes after checksum"));
    }
    let (blobs, crc) = body.split_at(declared);
    let stored = u32::from_le_bytes([crc[0], crc[1], crc[2], crc[3]]);
    if crc32fast::hash(blobs) != stored {
        return Err(FormatError::new("crc", "blob checksum mismatch"));
    }
    let mut layers = Vec::with_capacity(header.layers.len());
    let mut expect_offset = 0;
    for r in header.layers {
        let count: usize = r.shape.iter().product();
        if r.offset != expect_offset || r.length != count * 4 {
            return Err(FormatError::new(
                "record",
                format!("layer {} declares shape {:?} but {} bytes at {}", r.name, r.shape, r.length, r.offset),
            ));
        }
        expect_offset += r.length;
        let data = blobs[r.offset..r.offset + r.length]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        layers.push(LayerRecord {
            name: r.name,
            kind: r.kind,
            shape: r.shape,
            data,
        });
    }
    Ok(NetworkWeights { layers })
}

pub fn save_weights(path: impl AsRef<Path>, w: &NetworkWeights) -> Result<(), NnError> {
    let path = path.as_ref();
    fs::write(path, encode_weights(w)).map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights, NnError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PathIoError::new(path, e))?;
    Ok(decode_weights(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NetworkWeights {
        NetworkWeights {
            layers: vec![
                LayerRecord {
                    name: "a".into(),
                    kind: LayerKind::SharedAtrousConv,
                    shape: vec![1, 1, 3, 3],
                    data: (0..9).map(|i| i as f32 * 0.1 - 0.3).collect(),
                },
                LayerRecord {
                    name: "b".into(),
                    kind: LayerKind::BatchNorm,
                    shape: vec![4, 1],
                    data: vec![1.0, 0.0, f32::MIN_POSITIVE, 1.0],
                },
            ],
        }
    }

    #[test]
    fn roundtrip_bit_exact() {
        let w = sample();
        let back = decode_weights(&encode_weights(&w)).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn corruptions_rejected() {
        let good = encode_weights(&sample());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert_eq!(decode_weights(&bad_magic).unwrap_err().field, "magic");
        assert_eq!(decode_weights(&good[..good.len() - 10]).unwrap_err().field, "truncated");
        let mut flipped = good.clone();
        let n = flipped.len();
        flipped[n - 8] ^= 1;
        assert_eq!(decode_weights(&flipped).unwrap_err().field, "crc");
    }
}
