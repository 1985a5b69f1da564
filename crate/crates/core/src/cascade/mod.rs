//! Spectral cascade nowcasting: FFT bandpass decomposition, per-scale AR(2)
//! evolution with spatially correlated noise, and the advection-only and
//! persistence baselines.

mod ar;
mod noise;
mod nowcast;
mod spectral;

pub use ar::{fit_ar2, fit_ar2_levels, ArCoefficients};
pub use noise::{correlated_noise, NoiseGenerator};
pub use nowcast::{
    advection_ensemble, persistence_forecast, solarsteps_forecast, solarsteps_pa_forecast, NowcastConfig,
    MODEL_PERSISTENCE, MODEL_SOLARSTEPS, MODEL_SOLARSTEPS_PA,
};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridField;
use spectral::{signed_bin, Fft2};

/// Default number of cascade levels.
pub const DEFAULT_LEVELS: usize = 6;

/// Width of each Gaussian band in log-wavenumber, as a fraction of the
/// log-spacing between centers. Narrow enough that a sinusoid at a center
/// keeps well over 80% of its variance in its own level.
const BAND_WIDTH: f64 = 0.35;

/// Fourier-domain bandpass weights for one grid shape; weights at every
/// wavenumber sum to one.
pub struct FilterBank {
    rows: usize,
    cols: usize,
    centers: Vec<f64>,
    weights: Vec<Vec<f64>>,
    fft: Fft2,
}

impl FilterBank {
    pub fn new(rows: usize, cols: usize, n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidParameter("n_levels must be >= 1".into()));
        }
        if rows.min(cols) < 1usize << n_levels.min(63) {
            return Err(Error::TooSmall { rows, cols, levels: n_levels });
        }
        let l = rows.max(cols) as f64;
        let n = rows * cols;
        // Radial wavenumber of each bin in cycles per largest dimension.
        let radius: Vec<f64> = (0..n)
            .map(|k| {
                let fy = signed_bin(k / cols, rows) * l / rows as f64;
                let fx = signed_bin(k % cols, cols) * l / cols as f64;
                fy.hypot(fx)
            })
            .collect();

        if n_levels == 1 {
            return Ok(Self { rows, cols, centers: vec![1.0], weights: vec![vec![1.0; n]], fft: Fft2::new(rows, cols) });
        }
        let log_q = (l / 2.0).ln() / (n_levels - 1) as f64;
        let centers: Vec<f64> = (0..n_levels).map(|k| (k as f64 * log_q).exp()).collect();
        let width = BAND_WIDTH * log_q;

        let mut weights = vec![vec![0.0; n]; n_levels];
        let mut expo = vec![0.0; n_levels];
        for (bin, &r) in radius.iter().enumerate() {
            if r == 0.0 {
                weights[0][bin] = 1.0;
                continue;
            }
            let lr = r.ln();
            for (k, e) in expo.iter_mut().enumerate() {
                let d = (lr - k as f64 * log_q) / width;
                *e = -0.5 * d * d;
            }
            let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = expo.iter().map(|e| (e - top).exp()).sum();
            for (k, e) in expo.iter().enumerate() {
                weights[k][bin] = (e - top).exp() / total;
            }
        }
        Ok(Self { rows, cols, centers, weights, fft: Fft2::new(rows, cols) })
    }

    pub fn n_levels(&self) -> usize {
        self.centers.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Center wavenumbers, cycles per largest domain dimension.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Weight of `level` at FFT bin `(row, col)`.
    pub fn weight(&self, level: usize, row: usize, col: usize) -> f64 {
        self.weights[level][row * self.cols + col]
    }

    /// Splits a spectrum into unnormalized real levels.
    pub(crate) fn split_spectrum(&self, spectrum: &[Complex64]) -> Vec<Vec<f64>> {
        self.weights
            .iter()
            .map(|w| {
                let band: Vec<Complex64> = spectrum.iter().zip(w).map(|(c, &w)| c * w).collect();
                self.fft.inverse_real(&band)
            })
            .collect()
    }

    /// Decomposes a NaN-free row-major array of this bank's shape.
    pub fn decompose(&self, data: &[f64]) -> Result<Cascade> {
        if data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} filter bank",
                data.len(),
                self.rows,
                self.cols
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::DataQuality("cascade input must be NaN-free".into()));
        }
        let raw = self.split_spectrum(&self.fft.forward(data));
        let scale = data.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        Ok(Cascade::from_raw_levels(self.rows, self.cols, self.centers.clone(), raw, scale))
    }
}

/// Normalized spectral levels of one field, largest scale first.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub rows: usize,
    pub cols: usize,
    pub levels: Vec<Vec<f64>>,
    pub center_wavenumbers: Vec<f64>,
    pub level_means: Vec<f64>,
    pub level_stds: Vec<f64>,
}

impl Cascade {
    /// Normalizes each level; spreads negligible against `scale` count as zero.
    pub(crate) fn from_raw_levels(rows: usize, cols: usize, centers: Vec<f64>, raw: Vec<Vec<f64>>, scale: f64) -> Self {
        let mut levels = Vec::with_capacity(raw.len());
        let mut level_means = Vec::with_capacity(raw.len());
        let mut level_stds = Vec::with_capacity(raw.len());
        for mut level in raw {
            let (mean, std) = mean_std(&level, scale);
            if std > 0.0 {
                level.iter_mut().for_each(|x| *x = (*x - mean) / std);
            } else {
                level.iter_mut().for_each(|x| *x = 0.0);
            }
            levels.push(level);
            level_means.push(mean);
            level_stds.push(std);
        }
        Self { rows, cols, levels, center_wavenumbers: centers, level_means, level_stds }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Sum of the denormalized levels.
    pub fn recompose(&self) -> Vec<f64> {
        recompose_levels(&self.levels, &self.level_means, &self.level_stds)
    }
}

/// Sum over levels of `level · std + mean`.
pub fn recompose_levels(levels: &[Vec<f64>], means: &[f64], stds: &[f64]) -> Vec<f64> {
    let n = levels.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for ((level, &m), &s) in levels.iter().zip(means).zip(stds) {
        for (o, &x) in out.iter_mut().zip(level) {
            *o += x * s + m;
        }
    }
    out
}

/// Population mean and standard deviation; a spread below round-off of
/// `scale` counts as zero.
pub(crate) fn mean_std(xs: &[f64], scale: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-10 * scale {
        (mean, 0.0)
    } else {
        (mean, std)
    }
}

/// Decomposes a NaN-free field into `n_levels` normalized bandpass levels.
pub fn decompose(field: &GridField, n_levels: usize) -> Result<Cascade> {
    let bank = FilterBank::new(field.geometry.n_rows, field.geometry.n_cols, n_levels)?;
    let data: Vec<f64> = field.values.iter().map(|&v| v as f64).collect();
    bank.decompose(&data)
}

/// Copy of the field as f64 with NaN replaced by the mean of the finite values.
pub fn fill_with_mean(field: &GridField) -> Result<Vec<f64>> {
    let mean = field
        .finite_mean()
        .ok_or_else(|| Error::InsufficientData(format!("field at {} has no finite values", field.timestamp)))?;
    Ok(field.values.iter().map(|&v| if v.is_nan() { mean } else { v as f64 }).collect())
}
