//! Spatially correlated Gaussian noise shaped by a template's amplitude spectrum.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::spectral::Fft2;
use super::{fill_with_mean, mean_std, Cascade, FilterBank};
use crate::error::Result;
use crate::grid::GridField;
use crate::rng::{keyed_rng, Stream};

/// Nonparametric noise filter: the amplitude spectrum of a template field.
pub struct NoiseGenerator {
    rows: usize,
    cols: usize,
    amplitude: Vec<f64>,
    fft: Fft2,
}

impl NoiseGenerator {
    /// `template` is a NaN-free row-major array.
    pub fn new(template: &[f64], rows: usize, cols: usize) -> Self {
        let fft = Fft2::new(rows, cols);
        let mean = template.iter().sum::<f64>() / template.len() as f64;
        let centered: Vec<f64> = template.iter().map(|x| x - mean).collect();
        let mut amplitude: Vec<f64> = fft.forward(&centered).iter().map(|c| c.norm()).collect();
        amplitude[0] = 0.0;
        let peak = amplitude.iter().cloned().fold(0.0, f64::max);
        if peak <= 1e-12 * mean.abs().max(1.0) * (rows * cols) as f64 {
            // Featureless template: fall back to white noise.
            amplitude.iter_mut().for_each(|a| *a = 1.0);
            amplitude[0] = 0.0;
        }
        Self { rows, cols, amplitude, fft }
    }

    fn spectrum(&self, seed: u64, member: usize, lead: usize) -> Vec<Complex64> {
        let mut rng = keyed_rng(seed, Stream::CascadeNoise, &[member as u64, lead as u64]);
        let white: Vec<f64> = (0..self.rows * self.cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut spec = self.fft.forward(&white);
        for (c, &a) in spec.iter_mut().zip(&self.amplitude) {
            *c *= a;
        }
        spec
    }

    /// Zero-mean, unit-variance noise field.
    pub fn draw(&self, seed: u64, member: usize, lead: usize) -> Vec<f64> {
        let mut noise = self.fft.inverse_real(&self.spectrum(seed, member, lead));
        let (mean, std) = mean_std(&noise, 0.0);
        let inv = if std > 0.0 { 1.0 / std } else { 0.0 };
        noise.iter_mut().for_each(|x| *x = (*x - mean) * inv);
        noise
    }

    /// The noise field split by `bank`, each level standardized.
    pub fn draw_levels(&self, bank: &FilterBank, seed: u64, member: usize, lead: usize) -> Cascade {
        debug_assert_eq!(bank.shape(), (self.rows, self.cols));
        let raw = bank.split_spectrum(&self.spectrum(seed, member, lead));
        let scale = raw.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        Cascade::from_raw_levels(self.rows, self.cols, bank.centers().to_vec(), raw, scale)
    }
}

/// Noise with the template's spatial correlation, deterministic in
/// `(seed, member, lead)`. NaN in the template is replaced by its mean.
pub fn correlated_noise(template: &GridField, seed: u64, member: usize, lead: usize) -> Result<Vec<f64>> {
    let filled = fill_with_mean(template)?;
    let g = template.geometry;
    Ok(NoiseGenerator::new(&filled, g.n_rows, g.n_cols).draw(seed, member, lead))
}
