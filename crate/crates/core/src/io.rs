//! The binary array format shared by datasets, snapshots and ensembles, and
//! a small CSV writer.
//!
//! ```text
//! magic    4 bytes "SIFA"
//! version  u32     1
//! ndim     u32
//! shape    ndim x u64
//! data     prod(shape) x f64, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const ARRAY_MAGIC: &[u8; 4] = b"SIFA";
pub const ARRAY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension { expected: n, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// A `rows x cols` matrix from row-major data.
    pub fn matrix(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::Dimension { expected: cols, got: data.len() });
        }
        Self::new(vec![data.len() / cols, cols], data)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * (self.shape.len() + self.data.len()));
        buf.extend_from_slice(ARRAY_MAGIC);
        buf.extend_from_slice(&ARRAY_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &s in &self.shape {
            buf.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        if &head[..4] != ARRAY_MAGIC {
            return Err(Error::Format("not an array file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != ARRAY_VERSION {
            return Err(Error::Format(format!("unsupported array version {version}")));
        }
        let ndim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        if ndim > 16 {
            return Err(Error::Format(format!("implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| Error::Format("shape overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 8 {
            return Err(Error::Format(format!("expected {} data bytes, found {}", n * 8, bytes.len())));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { shape, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Columns of a rank-2 array.
    pub fn cols(&self) -> Result<usize> {
        match self.shape.as_slice() {
            [_, c] => Ok(*c),
            _ => Err(Error::Format(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }
}

/// Write a CSV file with a header row; values use the shortest round-trip
/// representation.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = Array::new(vec![2, 3], vec![1.0, -2.5, 3.0, 0.1, f64::MIN_POSITIVE, 1e300]).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 16 + 48);
        assert_eq!(Array::read_from(&mut buf.as_slice()).unwrap(), a);
        buf.pop();
        assert!(Array::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(Array::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Array::matrix(2, vec![0.0; 3]).is_err());
    }
}
