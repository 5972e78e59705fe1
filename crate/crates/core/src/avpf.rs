//! The AVPF binary matrix format.
//!
//! Layout (all little-endian):
//!
//! | offset | size  | content                    |
//! |--------|-------|----------------------------|
//! | 0      | 4     | magic `AVPF`               |
//! | 4      | 4     | version, `u32` = 1         |
//! | 8      | 4     | rows, `u32`                |
//! | 12     | 4     | cols, `u32`                |
//! | 16     | 4·r·c | row-major `f32` values     |
//!
//! Values are held as `f64` in memory and narrowed to `f32` on write, so a
//! matrix of `f32`-representable values round-trips bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Matrix;

pub const MAGIC: &[u8; 4] = b"AVPF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset,
        reason: reason.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| format_err(bytes.len(), format!("truncated header while reading {what}")))?;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

pub fn encode(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Shape(format!("{} rows exceed u32", m.rows())))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Shape(format!("{} cols exceed u32", m.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses an AVPF buffer. Any structural problem is reported with the byte
/// offset at which it was detected; the payload must fill the buffer exactly.
pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    match bytes.get(..4) {
        None => return Err(format_err(bytes.len(), "truncated header while reading magic")),
        Some(m) if m != MAGIC => return Err(format_err(0, format!("bad magic {m:02x?}"))),
        _ => {}
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .filter(|n| n.checked_add(HEADER_LEN).is_some())
        .ok_or_else(|| format_err(8, format!("dimension overflow for {rows}x{cols}")))?;
    let expected = HEADER_LEN + payload;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated payload: {rows}x{cols} needs {expected} bytes, have {}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(
            expected,
            format!("{} trailing bytes", bytes.len() - expected),
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Matrix::from_vec(rows, cols, data).expect("length checked above"))
}

pub fn write(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(m)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_is_twenty_bytes() {
        let bytes = encode(&Matrix::from_vec(1, 1, vec![0.5]).unwrap()).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], b"AVPF");
        assert_eq!(&bytes[16..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn random_matrix_round_trips_bitwise() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let m = Matrix::from_fn(7, 5, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            f32::from_bits((state >> 32) as u32 & 0x7f7f_ffff) as f64
        });
        let bytes = encode(&m).unwrap();
        let back = decode(&bytes).unwrap();
        let same = m
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode(&Matrix::zeros(1, 1)).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn rejects_truncation_version_and_overflow() {
        let bytes = encode(&Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(decode(&bytes[..10]), Err(Error::Format { offset: 10, .. })));
        assert!(matches!(decode(&bytes[..30]), Err(Error::Format { offset: 30, .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(Error::Format { offset: 40, .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(Error::Format { offset: 4, .. })));
        let mut huge = bytes[..16].to_vec();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&huge).is_err());
        assert!(decode(b"AV").is_err());
    }

    proptest! {
        #[test]
        fn finite_values_round_trip(rows in 0usize..6, cols in 0usize..6, vals in proptest::collection::vec(-1e30f32..1e30, 36)) {
            let m = Matrix::from_fn(rows, cols, |r, c| vals[r * cols + c] as f64);
            let back = decode(&encode(&m).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
