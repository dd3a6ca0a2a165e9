//! Cached 2D FFT plans for periodic image grids.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct Fft2 {
    pub height: usize,
    pub width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.pass(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1/(h w)` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.pass(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn pass(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        let (h, w) = (self.height, self.width);
        if w > 1 {
            for r in buf.chunks_exact_mut(w) {
                row.process(r);
            }
        }
        if h > 1 {
            let mut column = vec![Complex64::new(0.0, 0.0); h];
            for c in 0..w {
                for r in 0..h {
                    column[r] = buf[r * w + c];
                }
                col.process(&mut column);
                for r in 0..h {
                    buf[r * w + c] = column[r];
                }
            }
        }
    }

    /// Multiplies a real image by a spectral mask and returns the real part.
    pub fn filter(&self, x: &[f64], mask: impl Fn(usize, Complex64) -> Complex64) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        for (i, v) in buf.iter_mut().enumerate() {
            *v = mask(i, *v);
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}
