//! Two-dimensional FFT on row-major real data.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub(crate) fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, &self.row_fwd, &self.col_fwd);
        buf
    }

    /// Inverse transform, normalized, real part only.
    pub(crate) fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.transform(&mut buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for j in 0..self.cols {
            for i in 0..self.rows {
                column[i] = buf[i * self.cols + j];
            }
            col.process(&mut column);
            for i in 0..self.rows {
                buf[i * self.cols + j] = column[i];
            }
        }
    }
}

/// Signed frequency index of FFT bin `k` out of `n`.
#[inline]
pub(crate) fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
