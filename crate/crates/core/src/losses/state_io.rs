//! Binary per-pixel state files persisted between epochs.
//!
//! Layout: 8-byte magic `PXSTATE1`, then little-endian u32 header fields
//! (dtype, planes, width, height), then `planes * width * height` row-major
//! little-endian 32-bit values. dtype 0 holds f32 reals (EMA targets),
//! dtype 1 holds u32 counts.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const STATE_MAGIC: &[u8; 8] = b"PXSTATE1";

const DTYPE_F32: u32 = 0;
const DTYPE_U32: u32 = 1;

#[derive(Debug, Error)]
pub enum StateIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
}

fn io_err(path: &Path, source: io::Error) -> StateIoError {
    StateIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> StateIoError {
    StateIoError::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn write_header(out: &mut Vec<u8>, dtype: u32, planes: u32, width: u32, height: u32) {
    out.extend_from_slice(STATE_MAGIC);
    for v in [dtype, planes, width, height] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Header {
    dtype: u32,
    planes: usize,
    width: usize,
    height: usize,
}

fn read_header(path: &Path, bytes: &[u8]) -> Result<Header, StateIoError> {
    if bytes.len() < 24 {
        return Err(format_err(path, "file shorter than the header"));
    }
    if &bytes[..8] != STATE_MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let header = Header {
        dtype: field(0),
        planes: field(1) as usize,
        width: field(2) as usize,
        height: field(3) as usize,
    };
    let expected = 24 + 4 * header.planes * header.width * header.height;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    Ok(header)
}

/// Writes one plane of reals (stored as f32).
pub fn write_f32_state(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    values: &[f64],
) -> Result<(), StateIoError> {
    let path = path.as_ref();
    assert_eq!(values.len(), width * height);
    let mut out = Vec::with_capacity(24 + 4 * values.len());
    write_header(&mut out, DTYPE_F32, 1, width as u32, height as u32);
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads one plane of reals.
pub fn read_f32_state(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>), StateIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = read_header(path, &bytes)?;
    if header.dtype != DTYPE_F32 || header.planes != 1 {
        return Err(format_err(path, "expected a single f32 plane"));
    }
    let values = bytes[24..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok((header.width, header.height, values))
}

/// Writes count planes (e.g. the two candidate-count planes).
pub fn write_u32_state(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    planes: &[&[u32]],
) -> Result<(), StateIoError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(24 + 4 * planes.len() * width * height);
    write_header(
        &mut out,
        DTYPE_U32,
        planes.len() as u32,
        width as u32,
        height as u32,
    );
    for plane in planes {
        assert_eq!(plane.len(), width * height);
        for &v in *plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads count planes, checking the expected plane count.
pub fn read_u32_state(
    path: impl AsRef<Path>,
    expected_planes: usize,
) -> Result<(usize, usize, Vec<Vec<u32>>), StateIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = read_header(path, &bytes)?;
    if header.dtype != DTYPE_U32 {
        return Err(format_err(path, "expected u32 planes"));
    }
    if header.planes != expected_planes {
        return Err(format_err(
            path,
            format!("expected {expected_planes} planes, found {}", header.planes),
        ));
    }
    let plane_len = header.width * header.height;
    let mut planes = Vec::with_capacity(header.planes);
    for p in 0..header.planes {
        let start = 24 + 4 * p * plane_len;
        planes.push(
            bytes[start..start + 4 * plane_len]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    Ok((header.width, header.height, planes))
}
