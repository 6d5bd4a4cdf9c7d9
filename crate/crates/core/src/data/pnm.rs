//! Binary portable anymap I/O.
//!
//! Label masks are stored as 16-bit P5 graymaps (maxval 65535, big-endian
//! samples) and frame images as 8-bit P6 pixmaps. The canonical writer emits
//! single-space header tokens and exactly one newline before the payload, so
//! equal grids always produce byte-identical files.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::grid::LabelMask;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed {field}: {detail}")]
    Format {
        path: String,
        field: &'static str,
        detail: String,
    },
}

fn io_err(path: &Path, source: io::Error) -> PnmError {
    PnmError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, field: &'static str, detail: impl Into<String>) -> PnmError {
    PnmError::Format {
        path: path.display().to_string(),
        field,
        detail: detail.into(),
    }
}

/// 8-bit RGB frame image, row-major interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// r,g,b per pixel, `3 * width * height` bytes.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), 3 * width * height);
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderParser { bytes, pos: 0 }
    }

    /// Next whitespace-delimited token, skipping `#` comment lines.
    fn token(&mut self) -> Option<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()
    }

    /// Consumes the single whitespace byte that separates header and payload.
    fn payload(mut self) -> &'a [u8] {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        &self.bytes[self.pos..]
    }
}

fn parse_dim(path: &Path, field: &'static str, token: Option<&str>) -> Result<usize, PnmError> {
    let tok = token.ok_or_else(|| format_err(path, field, "missing token"))?;
    let value: usize = tok
        .parse()
        .map_err(|_| format_err(path, field, format!("not a number: {tok:?}")))?;
    if value == 0 {
        return Err(format_err(path, field, "must be positive"));
    }
    Ok(value)
}

/// Reads a 16-bit P5 graymap as a [`LabelMask`].
pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask, PnmError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut parser = HeaderParser::new(&bytes);

    let magic = parser.token();
    if magic != Some("P5") {
        return Err(format_err(
            path,
            "magic",
            format!("expected P5, found {:?}", magic.unwrap_or("<eof>")),
        ));
    }
    let width = parse_dim(path, "width", parser.token())?;
    let height = parse_dim(path, "height", parser.token())?;
    let maxval = parser
        .token()
        .ok_or_else(|| format_err(path, "maxval", "missing token"))?;
    if maxval != "65535" {
        return Err(format_err(
            path,
            "maxval",
            format!("expected 65535, found {maxval:?}"),
        ));
    }

    let payload = parser.payload();
    let expected = 2 * width * height;
    if payload.len() < expected {
        return Err(format_err(
            path,
            "payload",
            format!("expected {expected} bytes, found {}", payload.len()),
        ));
    }
    let labels = payload[..expected]
        .chunks_exact(2)
        .map(|px| u16::from_be_bytes([px[0], px[1]]))
        .collect();
    Ok(LabelMask::new(width, height, labels))
}

/// Writes a [`LabelMask`] in the canonical 16-bit P5 encoding.
pub fn write_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<(), PnmError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(32 + 2 * mask.labels().len());
    out.extend_from_slice(format!("P5 {} {} 65535\n", mask.width(), mask.height()).as_bytes());
    for &v in mask.labels() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads an 8-bit P6 pixmap.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage, PnmError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut parser = HeaderParser::new(&bytes);

    let magic = parser.token();
    if magic != Some("P6") {
        return Err(format_err(
            path,
            "magic",
            format!("expected P6, found {:?}", magic.unwrap_or("<eof>")),
        ));
    }
    let width = parse_dim(path, "width", parser.token())?;
    let height = parse_dim(path, "height", parser.token())?;
    let maxval = parser
        .token()
        .ok_or_else(|| format_err(path, "maxval", "missing token"))?;
    if maxval != "255" {
        return Err(format_err(
            path,
            "maxval",
            format!("expected 255, found {maxval:?}"),
        ));
    }

    let payload = parser.payload();
    let expected = 3 * width * height;
    if payload.len() < expected {
        return Err(format_err(
            path,
            "payload",
            format!("expected {expected} bytes, found {}", payload.len()),
        ));
    }
    Ok(RgbImage::new(width, height, payload[..expected].to_vec()))
}

/// Writes an 8-bit P6 pixmap in the canonical encoding.
pub fn write_image(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), PnmError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(32 + image.pixels.len());
    out.extend_from_slice(format!("P6 {} {} 255\n", image.width, image.height).as_bytes());
    out.extend_from_slice(&image.pixels);
    fs::write(path, out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng_substream;
    use proptest::prelude::*;

    fn tmpfile(name: &str) -> tempfile::TempDir {
        let _ = name;
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn decodes_samples_directly() {
        let dir = tmpfile("decode");
        let path = dir.path().join("m.pgm");
        let mut bytes = b"P5 2 2 65535\n".to_vec();
        for v in [0u16, 1, 1, 0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let mask = read_mask(&path).unwrap();
        assert_eq!((mask.width(), mask.height()), (2, 2));
        assert_eq!(mask.labels(), &[0, 1, 1, 0]);
    }

    #[test]
    fn write_then_read_is_identity() {
        let dir = tmpfile("roundtrip");
        let path = dir.path().join("m.pgm");
        let mask = LabelMask::new(3, 2, vec![0, 7, 65535, 1, 2, 3]);
        write_mask(&mask, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }

    #[test]
    fn writer_is_byte_deterministic_and_big_endian() {
        let dir = tmpfile("bytes");
        let a = dir.path().join("a.pgm");
        let b = dir.path().join("b.pgm");
        let mask = LabelMask::new(1, 1, vec![7]);
        write_mask(&mask, &a).unwrap();
        write_mask(&mask, &b).unwrap();
        let bytes_a = std::fs::read(&a).unwrap();
        assert_eq!(bytes_a, std::fs::read(&b).unwrap());
        assert_eq!(&bytes_a[bytes_a.len() - 2..], &[0x00, 0x07]);
        assert_eq!(&bytes_a[..13], b"P5 1 1 65535\n");
    }

    #[test]
    fn wrong_maxval_is_a_format_error() {
        let dir = tmpfile("maxval");
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P5 1 1 255\n\x00").unwrap();
        let err = read_mask(&path).unwrap_err();
        match err {
            PnmError::Format { field, .. } => assert_eq!(field, "maxval"),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tmpfile("trunc");
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P5 2 2 65535\n\x00\x01").unwrap();
        let err = read_mask(&path).unwrap_err();
        match err {
            PnmError::Format { field, .. } => assert_eq!(field, "payload"),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tmpfile("magic");
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P2 1 1 65535\n0").unwrap();
        assert!(matches!(
            read_mask(&path),
            Err(PnmError::Format { field: "magic", .. })
        ));
    }

    #[test]
    fn image_roundtrip() {
        let dir = tmpfile("img");
        let path = dir.path().join("f.ppm");
        let img = RgbImage::new(2, 1, vec![1, 2, 3, 250, 251, 252]);
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn random_masks_roundtrip(
            (w, h) in (1usize..16, 1usize..16),
            seed in any::<u64>(),
        ) {
            let mut rng = rng_substream(seed, "pnm-roundtrip");
            let labels: Vec<u16> =
                (0..w * h).map(|_| rng.next_index(65536) as u16).collect();
            let mask = LabelMask::new(w, h, labels);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.pgm");
            write_mask(&mask, &path).unwrap();
            prop_assert_eq!(read_mask(&path).unwrap(), mask);
        }
    }
}
