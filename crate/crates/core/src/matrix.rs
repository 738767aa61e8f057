//! Binary matrix dump: 16-byte header (`AUDF`, u32 rows, u32 cols, u32 reserved = 0)
//! followed by row-major little-endian `f32` values.

use std::fs;
use std::path::Path;

use crate::error::{AudError, Result};

pub const MAGIC: &[u8; 4] = b"AUDF";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Matrix {
    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(AudError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            values: values.iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(AudError::Format("missing AUDF header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (rows, cols) = (word(4), word(8));
        let body = &bytes[HEADER_LEN..];
        if body.len() != rows * cols * 4 {
            return Err(AudError::Format(format!(
                "AUDF body holds {} bytes, header promises {rows}x{cols} f32",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { rows, cols, values })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| AudError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| AudError::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Matrix::from_f64(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = m.encode();
        assert_eq!(&b[..4], b"AUDF");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(b.len(), 16 + 24);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn truncated_body_rejected() {
        let mut b = Matrix::from_f64(1, 2, &[1.0, 2.0]).unwrap().encode();
        b.pop();
        assert!(Matrix::decode(&b).is_err());
        assert!(Matrix::decode(b"XXXX").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let vals: Vec<f32> = (0..rows * cols).map(|i| (seed.wrapping_mul(i as u64 + 1) % 1000) as f32 * 0.37).collect();
            let m = Matrix { rows, cols, values: vals };
            prop_assert_eq!(Matrix::decode(&m.encode()).unwrap(), m);
        }
    }
}
