//! Blur and anti-aliasing kernels, and the plain-text kernel/matrix file format.
//!
//! ```text
//! ADAPS-KERNEL v1
//! <rows> <cols>
//! <row-major coefficients, whitespace separated>
//! ```
//!
//! Dense operators use the same layout with an `ADAPS-MATRIX v1` header.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const KERNEL_HEADER: &str = "ADAPS-KERNEL v1";
pub const MATRIX_HEADER: &str = "ADAPS-MATRIX v1";

/// A 2D convolution kernel with an explicit origin.
///
/// The forward operator is `(H x)[p] = sum_q k[q] x[p - q + origin]` on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub origin: (usize, usize),
}

impl Kernel {
    /// Kernel centered at `(rows / 2, cols / 2)`.
    pub fn centered(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Config(format!(
                "kernel {rows}x{cols} with {} coefficients",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("kernel has non-finite coefficients".into()));
        }
        Ok(Self {
            rows,
            cols,
            data,
            origin: (rows / 2, cols / 2),
        })
    }

    /// One-dimensional kernel laid out as a single row.
    pub fn row(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::centered(1, n, data)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Rescales the coefficients to unit sum.
    pub fn normalized(mut self) -> Result<Self> {
        let s = self.sum();
        if s.abs() < 1e-300 {
            return Err(Error::Config("kernel sums to zero".into()));
        }
        for v in &mut self.data {
            *v /= s;
        }
        Ok(self)
    }

    /// Separable outer product `col ⊗ row`.
    pub fn separable(col: &[f64], row: &[f64], origin: (usize, usize)) -> Self {
        let data = col.iter().flat_map(|a| row.iter().map(move |b| a * b)).collect();
        Self {
            rows: col.len(),
            cols: row.len(),
            data,
            origin,
        }
    }
}

/// Isotropic Gaussian kernel of odd `size`, normalized to unit sum.
pub fn gaussian_kernel(size: usize, std: f64) -> Result<Kernel> {
    if size % 2 == 0 || std <= 0.0 {
        return Err(Error::Config(format!(
            "gaussian kernel needs odd size and positive std, got {size}, {std}"
        )));
    }
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-0.5 * d * d / (std * std)).exp()
        })
        .collect();
    let k = Kernel::separable(&taps, &taps, (size / 2, size / 2));
    k.normalized()
}

/// Keys cubic convolution weight.
pub fn keys_cubic(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// 1D anti-aliasing taps for bicubic downsampling by `factor`, plus the origin
/// that centers the support on each output block.
pub fn bicubic_taps(factor: usize) -> (Vec<f64>, usize) {
    let s = factor as f64;
    if factor % 2 == 0 {
        let taps: Vec<f64> = (0..4 * factor)
            .map(|j| keys_cubic((j as f64 - 2.0 * s + 0.5) / s, -0.5))
            .collect();
        let total: f64 = taps.iter().sum();
        let origin = 5 * factor / 2 - 1;
        (taps.into_iter().map(|v| v / total).collect(), origin)
    } else {
        let len = 4 * factor - 1;
        let taps: Vec<f64> = (0..len)
            .map(|j| keys_cubic((j as f64 - 2.0 * s + 1.0) / s, -0.5))
            .collect();
        let total: f64 = taps.iter().sum();
        let origin = 2 * factor - 1 + (factor - 1) / 2;
        (taps.into_iter().map(|v| v / total).collect(), origin)
    }
}

/// 1D box taps for average pooling by `factor`.
pub fn box_taps(factor: usize) -> (Vec<f64>, usize) {
    // output block i averages inputs s*i .. s*i + s - 1
    (vec![1.0 / factor as f64; factor], factor - 1)
}

/// Straight-line motion blur of odd `size`: a segment of `length` pixels through the
/// center at `angle` radians, rasterized by supersampling and normalized to unit sum.
pub fn linear_motion_kernel(size: usize, length: f64, angle: f64) -> Result<Kernel> {
    if size % 2 == 0 || length < 0.0 || length > size as f64 {
        return Err(Error::Config(format!(
            "motion kernel needs odd size >= length, got size {size}, length {length}"
        )));
    }
    let mut data = vec![0.0; size * size];
    let c = (size / 2) as f64;
    let samples = (16.0 * length.max(1.0)).ceil() as usize;
    for i in 0..=samples {
        let s = if samples == 0 {
            0.0
        } else {
            i as f64 / samples as f64 - 0.5
        } * length;
        let x = c + s * angle.cos();
        let y = c - s * angle.sin();
        let (r, col) = (y.round() as usize, x.round() as usize);
        if r < size && col < size {
            data[r * size + col] += 1.0;
        }
    }
    Kernel::centered(size, size, data)?.normalized()
}

fn parse_table(text: &str, header: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(h) if h == header => {}
        other => return Err(Error::Parse(format!("expected header `{header}`, found {other:?}"))),
    }
    let dims = lines
        .next()
        .ok_or_else(|| Error::Parse("missing dimensions line".into()))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Parse(format!("bad dimension `{t}`: {e}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!("expected 2 dimensions, got {}", dims.len())));
    };
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| {
            t.parse()
                .map_err(|e| Error::Parse(format!("bad coefficient `{t}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} coefficients, found {}",
            rows * cols,
            values.len()
        )));
    }
    Ok((rows, cols, values))
}

fn format_table(header: &str, rows: usize, cols: usize, values: &[f64]) -> String {
    let mut out = format!("{header}\n{rows} {cols}\n");
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_kernel(text: &str) -> Result<Kernel> {
    let (rows, cols, values) = parse_table(text, KERNEL_HEADER)?;
    Kernel::centered(rows, cols, values)
}

pub fn format_kernel(kernel: &Kernel) -> String {
    format_table(KERNEL_HEADER, kernel.rows, kernel.cols, &kernel.data)
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let (rows, cols, values) = parse_table(text, MATRIX_HEADER)?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let values: Vec<f64> = (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
        .collect();
    format_table(MATRIX_HEADER, m.nrows(), m.ncols(), &values)
}

pub fn read_kernel(path: &Path) -> Result<Kernel> {
    parse_kernel(&std::fs::read_to_string(path)?)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

pub fn write_kernel(path: &Path, kernel: &Kernel) -> Result<()> {
    std::fs::write(path, format_kernel(kernel))?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_gaussian_is_nearly_uniform() {
        let k = gaussian_kernel(5, 10.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-14);
        let (lo, hi) = k
            .data
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        // exp(-(4+4)/200) spread between corner and center
        assert!(hi / lo < 1.05);
        assert!((hi - 1.0 / 25.0).abs() < 2e-3);
    }

    #[test]
    fn gaussian_rejects_even_size() {
        assert!(gaussian_kernel(4, 1.0).is_err());
    }

    #[test]
    fn keys_weights_interpolate() {
        assert_eq!(keys_cubic(0.0, -0.5), 1.0);
        assert_eq!(keys_cubic(1.0, -0.5), 0.0);
        assert_eq!(keys_cubic(2.0, -0.5), 0.0);
        for f in [2usize, 3, 4] {
            let (taps, _) = bicubic_taps(f);
            assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let n = taps.len();
            for j in 0..n {
                assert!((taps[j] - taps[n - 1 - j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn motion_kernel_is_normalized_line() {
        let k = linear_motion_kernel(9, 7.0, 0.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-14);
        // horizontal line stays in the center row
        for r in 0..9 {
            for c in 0..9 {
                if r != 4 {
                    assert_eq!(k.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn kernel_file_round_trip() {
        let k = gaussian_kernel(3, 0.7).unwrap();
        let back = parse_kernel(&format_kernel(&k)).unwrap();
        for (a, b) in k.data.iter().zip(&back.data) {
            assert_eq!(a, b);
        }
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn kernel_file_errors() {
        assert!(parse_kernel("ADAPS-MATRIX v1\n1 1\n1").is_err());
        assert!(parse_kernel("ADAPS-KERNEL v1\n2 2\n1 2 3").is_err());
        assert!(parse_kernel("ADAPS-KERNEL v1\n1\n1").is_err());
        assert!(parse_kernel("ADAPS-KERNEL v1\n1 1\nx").is_err());
    }
}
