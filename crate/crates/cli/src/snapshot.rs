//! Binary field snapshots.
//!
//! Layout, all little-endian: magic `SPHF`, `u32` version, `u32` dimension
//! `d`, `d × u64` node counts, `d × f64` lengths, `f64` time, `f64`
//! exponent, then the node values as `f64` in row-major order.

use std::path::Path;

use sphereflow_core::{make_domain, Field};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SPHF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a snapshot file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0} (expected {VERSION})")]
    Version(u32),
    #[error("corrupt snapshot: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("corrupt snapshot header: {0}")]
    Header(String),
}

pub fn encode_snapshot(field: &Field, meta: SnapshotMeta) -> Vec<u8> {
    let domain = field.domain();
    let d = domain.dimension();
    let mut out = Vec::with_capacity(header_len(d) + 8 * field.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &n in domain.sizes() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &l in domain.lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&meta.t.to_le_bytes());
    out.extend_from_slice(&meta.p.to_le_bytes());
    for &v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn header_len(d: usize) -> usize {
    4 + 4 + 4 + 16 * d + 16
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], SnapshotError> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or(SnapshotError::SizeMismatch { expected: self.pos + N, actual: self.bytes.len() })?;
        self.pos += N;
        Ok(chunk.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<(Field, SnapshotMeta), SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take()?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let d = r.u32()? as usize;
    if d == 0 || d > 3 {
        return Err(SnapshotError::Header(format!("dimension {d} outside 1..=3")));
    }
    let sizes: Vec<usize> = (0..d).map(|_| r.u64().map(|n| n as usize)).collect::<Result<_, _>>()?;
    let lengths: Vec<f64> = (0..d).map(|_| r.f64()).collect::<Result<_, _>>()?;
    let t = r.f64()?;
    let p = r.f64()?;
    let nodes = sizes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| SnapshotError::Header("node count overflows".into()))?;
    let expected = nodes
        .checked_mul(8)
        .and_then(|b| b.checked_add(header_len(d)))
        .ok_or_else(|| SnapshotError::Header("node count overflows".into()))?;
    if bytes.len() != expected {
        return Err(SnapshotError::SizeMismatch { expected, actual: bytes.len() });
    }
    let values: Vec<f64> = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let domain = make_domain(d, &lengths, &sizes).map_err(|e| SnapshotError::Header(e.to_string()))?;
    let field = Field::from_values(&domain, values).map_err(|e| SnapshotError::Header(e.to_string()))?;
    Ok((field, SnapshotMeta { t, p }))
}

pub fn write_snapshot(field: &Field, meta: SnapshotMeta, path: &Path) -> Result<(), SnapshotError> {
    std::fs::write(path, encode_snapshot(field, meta))
        .map_err(|source| SnapshotError::Io { path: path.display().to_string(), source })
}

pub fn read_snapshot(path: &Path) -> Result<(Field, SnapshotMeta), SnapshotError> {
    let bytes =
        std::fs::read(path).map_err(|source| SnapshotError::Io { path: path.display().to_string(), source })?;
    decode_snapshot(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        let d = make_domain(2, &[1.0, 2.5], &[5, 3]).unwrap();
        Field::from_fn(&d, |x| (x[0] * 3.1).sin() * x[1] - 1e-300)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let f = sample();
        let meta = SnapshotMeta { t: 0.125, p: 4.0 };
        let bytes = encode_snapshot(&f, meta);
        let (g, m) = decode_snapshot(&bytes).unwrap();
        assert_eq!(m, meta);
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(g.domain().sizes(), f.domain().sizes());
        assert_eq!(encode_snapshot(&g, m), bytes);
    }

    #[test]
    fn truncated_and_padded_files_are_rejected() {
        let bytes = encode_snapshot(&sample(), SnapshotMeta { t: 0.0, p: 2.0 });
        assert!(matches!(decode_snapshot(&bytes[..bytes.len() - 3]), Err(SnapshotError::SizeMismatch { .. })));
        assert!(matches!(decode_snapshot(&bytes[..10]), Err(SnapshotError::SizeMismatch { .. })));
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(matches!(decode_snapshot(&padded), Err(SnapshotError::SizeMismatch { .. })));
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode_snapshot(&sample(), SnapshotMeta { t: 0.0, p: 2.0 });
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_snapshot(&wrong), Err(SnapshotError::BadMagic(_))));
        bytes[4] = 9;
        assert!(matches!(decode_snapshot(&bytes), Err(SnapshotError::Version(9))));
    }
}
