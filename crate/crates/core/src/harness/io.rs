//! Artifact formats: `ADAPS-TENSOR v1` arrays and 8-bit PGM previews.
//!
//! A tensor file is the header line, one line of space-separated dimensions,
//! then the values as little-endian `f64` in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_HEADER: &str = "ADAPS-TENSOR v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || expected != data.len() {
            return Err(Error::Config(format!(
                "tensor dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let mut out = format!("{TENSOR_HEADER}\n{}\n", dims.join(" ")).into_bytes();
        out.reserve(8 * self.data.len());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut lines = bytes.splitn(3, |b| *b == b'\n');
        let header = lines.next().unwrap_or_default();
        if header != TENSOR_HEADER.as_bytes() {
            return Err(Error::Parse("missing ADAPS-TENSOR v1 header".into()));
        }
        let dims_line = std::str::from_utf8(lines.next().unwrap_or_default())
            .map_err(|_| Error::Parse("tensor dims line is not ASCII".into()))?;
        let dims = dims_line
            .split_whitespace()
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("tensor dim {d:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let payload = lines.next().unwrap_or_default();
        let count: usize = dims.iter().product();
        if payload.len() != 8 * count {
            return Err(Error::Parse(format!(
                "tensor payload has {} bytes, dims {dims:?} need {}",
                payload.len(),
                8 * count
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(dims, data)
    }
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, tensor.to_bytes())?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::from_bytes(&fs::read(path)?)
}

/// Binary 8-bit PGM of a `height x width` image, mapping `[lo, hi]` to `[0, 255]`.
pub fn pgm_bytes(height: usize, width: usize, data: &[f64], lo: f64, hi: f64) -> Result<Vec<u8>> {
    if data.len() != height * width || !(hi > lo) {
        return Err(Error::Config(format!(
            "cannot export {} values as a {height}x{width} image over [{lo}, {hi}]",
            data.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        data.iter()
            .map(|v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn write_pgm(path: &Path, height: usize, width: usize, data: &[f64], lo: f64, hi: f64) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&pgm_bytes(height, width, data, lo, hi)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let t = Tensor::new(vec![2, 3], vec![0.1, -2.0, f64::MAX, 1e-300, 0.0, 7.5]).unwrap();
        let bytes = t.to_bytes();
        assert!(bytes.starts_with(b"ADAPS-TENSOR v1\n2 3\n"));
        assert_eq!(Tensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn tensor_rejects_truncation() {
        let t = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let bytes = t.to_bytes();
        assert!(Tensor::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Tensor::from_bytes(b"P5\n").is_err());
        assert!(Tensor::new(vec![3], vec![1.0]).is_err());
    }

    #[test]
    fn pgm_layout() {
        let bytes = pgm_bytes(1, 3, &[-1.0, 0.0, 1.0], -1.0, 1.0).unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255]);
    }
}
