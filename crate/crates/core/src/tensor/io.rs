//! The raw `.tcn` binary tensor format and a whitespace text loader.
//!
//! Binary layout (all little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `TCTN` |
//! | 2     | version, u16 = 1 |
//! | 2     | order d, u16 |
//! | 8·d   | dims, u64 each |
//! | 8·∏N  | values, binary64, row-major |

use std::fs;
use std::path::Path;

use super::{DenseTensor, MAX_ORDER};
use crate::bytes::ByteReader;
use crate::error::{Error, Result};

pub const TCN_MAGIC: &[u8; 4] = b"TCTN";
pub const TCN_VERSION: u16 = 1;

pub fn write_tcn(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(TCN_MAGIC);
    out.extend_from_slice(&TCN_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.order() as u16).to_le_bytes());
    for &n in t.dims() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_tcn(bytes: &[u8]) -> Result<DenseTensor> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(TCN_MAGIC)?;
    let at = r.offset();
    let version = r.u16("version")?;
    if version != TCN_VERSION {
        return Err(Error::format(at, format!("unsupported .tcn version {version}")));
    }
    let at = r.offset();
    let d = r.u16("order")? as usize;
    if d == 0 || d > MAX_ORDER {
        return Err(Error::format(at, format!("order {d} out of range 1..={MAX_ORDER}")));
    }
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        dims.push(r.length("mode length", u32::MAX as u64)?);
    }
    let len = dims
        .iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
        .ok_or_else(|| {
            Error::format(
                r.offset(),
                format!("dims {dims:?} need more value bytes than the {} available", r.remaining()),
            )
        })?;
    let start = r.offset();
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        values.push(r.f64("value")?);
    }
    r.finish()?;
    DenseTensor::new(dims, values).map_err(|e| Error::format(start, e.to_string()))
}

pub fn read_tcn_file(path: &Path) -> Result<DenseTensor> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    read_tcn(&bytes)
}

pub fn write_tcn_file(path: &Path, t: &DenseTensor) -> Result<()> {
    fs::write(path, write_tcn(t))?;
    Ok(())
}

/// Parses the text fixture format: the first non-empty line holds the dims,
/// the remaining whitespace-separated tokens are the values in row-major order.
pub fn parse_text(text: &str) -> Result<DenseTensor> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format(0, "empty text tensor"))?;
    let dims = header
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|e| Error::format(0, format!("bad dim {tok:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::format(0, format!("bad value {tok:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    DenseTensor::new(dims, values)
}
