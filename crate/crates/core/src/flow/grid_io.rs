//! Grid files.
//!
//! Binary layout, all little-endian:
//!
//! | offset | size | content                    |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `b"SKYG"`            |
//! | 4      | 4    | rows `M` (u32)             |
//! | 8      | 4    | columns `N` (u32)          |
//! | 12     | 4    | dtype code, `1` = f32      |
//! | 16     | 4·MN | values, row-major f32      |
//!
//! The text form is a first line `M N` followed by `M` lines of `N`
//! whitespace-separated values.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SKYG";
pub const DTYPE_F32: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode_grid(grid: &Array2<f64>) -> Vec<u8> {
    let (m, n) = grid.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m * n);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for &v in grid.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
        return Err(Error::Format("not a grid file (bad magic)".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
    let (m, n, dtype) = (word(4) as usize, word(8) as usize, word(12));
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    let expected = HEADER_LEN + 4 * m * n;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Array2::from_shape_vec((m, n), values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_grid(path: impl AsRef<Path>, grid: &Array2<f64>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_grid(grid))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_grid(&bytes)
}

pub fn grid_to_text(grid: &Array2<f64>) -> String {
    let (m, n) = grid.dim();
    let mut s = format!("{m} {n}\n");
    for row in grid.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn grid_from_text(text: &str) -> Result<Array2<f64>> {
    let mut tokens = text.split_whitespace();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Format("missing grid header".into()))?
            .parse()
            .map_err(|e| Error::Format(format!("bad grid header: {e}")))
    };
    let (m, n) = (dim()?, dim()?);
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("bad value {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if values.len() != m * n {
        return Err(Error::Format(format!("expected {} values, found {}", m * n, values.len())));
    }
    Array2::from_shape_vec((m, n), values).map_err(|e| Error::Format(e.to_string()))
}
