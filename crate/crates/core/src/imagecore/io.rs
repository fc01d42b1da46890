//! PGM (P5, maxval 255) and 8-bit grayscale PNG, chosen by file extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub use crate::error::FormatError;
use crate::error::PathIoError;

use super::GrayImage;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error(transparent)]
    Io(#[from] PathIoError),
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
    #[error("unsupported image extension: {0}")]
    Extension(String),
}

impl ImageError {
    pub fn format_field(&self) -> Option<&str> {
        match self {
            ImageError::Format { source, .. } => Some(&source.field),
            _ => None,
        }
    }
}

enum Kind {
    Pgm,
    Png,
}

fn kind_of(path: &Path) -> Result<Kind, ImageError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") => Ok(Kind::Pgm),
        Some("png") => Ok(Kind::Png),
        _ => Err(ImageError::Extension(path.display().to_string())),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let kind = kind_of(path)?;
    let file = File::open(path).map_err(|e| PathIoError::new(path, e))?;
    let mut reader = BufReader::new(file);
    let res = match kind {
        Kind::Pgm => {
            let mut bytes = Vec::new();
            reader
                .read_to_end(&mut bytes)
                .map_err(|e| PathIoError::new(path, e))?;
            decode_pgm(&bytes)
        }
        Kind::Png => decode_png(reader),
    };
    res.map_err(|source| ImageError::Format {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_image(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), ImageError> {
    let path = path.as_ref();
    let kind = kind_of(path)?;
    let file = File::create(path).map_err(|e| PathIoError::new(path, e))?;
    let mut w = BufWriter::new(file);
    match kind {
        Kind::Pgm => {
            write!(w, "P5\n{} {}\n255\n", img.width(), img.height())
                .and_then(|_| w.write_all(img.pixels()))
                .map_err(|e| PathIoError::new(path, e))?;
        }
        Kind::Png => {
            let mut enc = png::Encoder::new(&mut w, img.width() as u32, img.height() as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let to_io = |e: png::EncodingError| {
                PathIoError::new(path, std::io::Error::other(e.to_string()))
            };
            let mut writer = enc.write_header().map_err(to_io)?;
            writer.write_image_data(img.pixels()).map_err(to_io)?;
            writer.finish().map_err(to_io)?;
        }
    }
    w.flush().map_err(|e| PathIoError::new(path, e))?;
    Ok(())
}

/// Parses a binary PGM. Comments (`#` to end of line) are allowed between
/// header tokens.
pub(crate) fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, FormatError> {
    let mut pos = 0usize;
    let mut token = |name: &str| -> Result<String, FormatError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::new(name, "missing header token"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P5" {
        return Err(FormatError::new("magic", format!("expected P5, found {magic:?}")));
    }
    let parse = |name: &str, s: String| -> Result<usize, FormatError> {
        s.parse::<usize>()
            .map_err(|_| FormatError::new(name, format!("not an integer: {s:?}")))
    };
    let width = parse("width", token("width")?)?;
    let height = parse("height", token("height")?)?;
    let maxval = parse("maxval", token("maxval")?)?;
    if width == 0 || height == 0 {
        return Err(FormatError::new("dimensions", "zero width or height"));
    }
    if maxval != 255 {
        return Err(FormatError::new("maxval", format!("only 255 is supported, found {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = width * height;
    if bytes.len() < start + need {
        return Err(FormatError::new("raster", "truncated pixel data"));
    }
    Ok(GrayImage::from_raw(width, height, bytes[start..start + need].to_vec()))
}

fn decode_png<R: std::io::BufRead + std::io::Seek>(r: R) -> Result<GrayImage, FormatError> {
    let mut dec = png::Decoder::new(r);
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec
        .read_info()
        .map_err(|e| FormatError::new("header", e.to_string()))?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    if info.color_type != png::ColorType::Grayscale {
        return Err(FormatError::new(
            "color type",
            format!("expected grayscale without alpha, found {:?}", info.color_type),
        ));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(FormatError::new(
            "bit depth",
            format!("expected 8, found {:?}", info.bit_depth),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::new("dimensions", "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| FormatError::new("data", e.to_string()))?;
    buf.truncate(frame.buffer_size());
    if buf.len() != width * height {
        return Err(FormatError::new("data", "unexpected row stride"));
    }
    Ok(GrayImage::from_raw(width, height, buf))
}
