//! Per-level AR(2) models fitted with the Yule–Walker equations.

use serde::{Deserialize, Serialize};

use super::Cascade;
use crate::error::{Error, Result};

/// Distance kept from the edges of the stationarity triangle.
const STATIONARITY_MARGIN: f64 = 1e-3;

/// Below this `1 − r1²` the Yule–Walker system is treated as singular.
/// Fields are stored as f32, so correlations closer to 1 than this are
/// rounding noise and would yield spurious near-unit-root pairs.
const DEGENERATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArCoefficients {
    pub phi1: f64,
    pub phi2: f64,
    pub innovation_variance: f64,
    /// Lag-1 and lag-2 correlations the model was fitted to.
    pub r1: f64,
    pub r2: f64,
}

impl ArCoefficients {
    /// Yule–Walker solution for lag-1 and lag-2 autocorrelations, projected
    /// into the stationarity triangle.
    pub fn from_correlations(r1: f64, r2: f64) -> Self {
        let r1 = if r1.is_finite() { r1.clamp(-1.0, 1.0) } else { 0.0 };
        let r2 = if r2.is_finite() { r2.clamp(-1.0, 1.0) } else { 0.0 };
        let denom = 1.0 - r1 * r1;
        let (mut phi1, mut phi2) = if denom <= DEGENERATE_TOL {
            (0.999 * r1, 0.0)
        } else {
            (r1 * (1.0 - r2) / denom, (r2 - r1 * r1) / denom)
        };

        let edge = 1.0 - STATIONARITY_MARGIN;
        phi2 = phi2.clamp(-edge, edge);
        if phi1 + phi2 > edge {
            phi1 = edge - phi2;
        }
        if phi2 - phi1 > edge {
            phi1 = phi2 - edge;
        }
        let innovation_variance = (1.0 - phi1 * r1 - phi2 * r2).max(0.0);
        Self { phi1, phi2, innovation_variance, r1, r2 }
    }

    pub fn is_stationary(&self) -> bool {
        self.phi2.abs() < 1.0 && self.phi1 + self.phi2 < 1.0 && self.phi2 - self.phi1 < 1.0
    }

    /// Next value from the two most recent ones plus a scaled innovation.
    #[inline]
    pub fn step(&self, current: f64, previous: f64, innovation: f64) -> f64 {
        self.phi1 * current + self.phi2 * previous + self.innovation_variance.sqrt() * innovation
    }
}

/// Pooled Pearson correlation of all `(x[t], x[t − lag])` pixel pairs.
fn lagged_correlation(history: &[&[f64]], valid: Option<&[bool]>, lag: usize) -> f64 {
    let (mut n, mut sa, mut sb) = (0.0, 0.0, 0.0);
    let keep = |p: usize| valid.is_none_or(|v| v[p]);
    for t in lag..history.len() {
        for (p, (&a, &b)) in history[t].iter().zip(history[t - lag]).enumerate() {
            if keep(p) {
                n += 1.0;
                sa += a;
                sb += b;
            }
        }
    }
    if n < 2.0 {
        return 0.0;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for t in lag..history.len() {
        for (p, (&a, &b)) in history[t].iter().zip(history[t - lag]).enumerate() {
            if keep(p) {
                cov += (a - ma) * (b - mb);
                va += (a - ma) * (a - ma);
                vb += (b - mb) * (b - mb);
            }
        }
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Fits one AR(2) model to a time-ordered history of co-registered arrays,
/// using only pixels flagged in `valid`.
pub fn fit_ar2(history: &[&[f64]], valid: Option<&[bool]>) -> Result<ArCoefficients> {
    if history.len() < 3 {
        return Err(Error::InsufficientData(format!("AR(2) fit needs 3 time steps, got {}", history.len())));
    }
    let n = history[0].len();
    if history.iter().any(|h| h.len() != n) || valid.is_some_and(|v| v.len() != n) {
        return Err(Error::Dimension("AR history arrays differ in length".into()));
    }
    let r1 = lagged_correlation(history, valid, 1);
    let r2 = lagged_correlation(history, valid, 2);
    Ok(ArCoefficients::from_correlations(r1, r2))
}

/// One AR(2) model per cascade level.
pub fn fit_ar2_levels(history: &[Cascade], valid: Option<&[bool]>) -> Result<Vec<ArCoefficients>> {
    let Some(first) = history.first() else {
        return Err(Error::InsufficientData("empty cascade history".into()));
    };
    if history.iter().any(|c| c.n_levels() != first.n_levels()) {
        return Err(Error::Dimension("cascades differ in level count".into()));
    }
    (0..first.n_levels())
        .map(|k| {
            let series: Vec<&[f64]> = history.iter().map(|c| c.levels[k].as_slice()).collect();
            fit_ar2(&series, valid)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_correlations() {
        let c = ArCoefficients::from_correlations(0.0, 0.0);
        assert_eq!((c.phi1, c.phi2, c.innovation_variance), (0.0, 0.0, 1.0));
    }

    #[test]
    fn embedded_ar1() {
        let c = ArCoefficients::from_correlations(0.9, 0.81);
        assert!((c.phi1 - 0.9).abs() < 1e-12);
        assert!(c.phi2.abs() < 1e-12);
        assert!((c.innovation_variance - 0.19).abs() < 1e-12);
    }

    #[test]
    fn degenerate_falls_back() {
        let c = ArCoefficients::from_correlations(1.0, 1.0);
        assert!((c.phi1 - 0.999).abs() < 1e-12);
        assert_eq!(c.phi2, 0.0);
        assert!(c.is_stationary());
    }

    #[test]
    fn projection_reaches_triangle() {
        for (r1, r2) in [(0.99, -0.9), (-0.99, 0.99), (0.5, 0.99), (0.95, 0.5)] {
            let c = ArCoefficients::from_correlations(r1, r2);
            assert!(c.is_stationary(), "{r1} {r2} -> {c:?}");
            assert!(c.innovation_variance >= 0.0);
        }
    }

    #[test]
    fn short_history_rejected() {
        let a = [1.0, 2.0];
        assert!(fit_ar2(&[&a, &a], None).is_err());
    }

    #[test]
    fn identical_history_is_degenerate() {
        let a = [1.0, -2.0, 0.5, 3.0];
        let c = fit_ar2(&[&a, &a, &a, &a], None).unwrap();
        assert!((c.phi1 - 0.999).abs() < 1e-9);
    }

    #[test]
    fn mask_excludes_pixels() {
        let a = [1.0, 2.0, 3.0, 100.0];
        let b = [1.0, 2.0, 3.0, -100.0];
        let mask = [true, true, true, false];
        let c = fit_ar2(&[&a, &b, &a], Some(&mask)).unwrap();
        assert!((c.phi1 - 0.999).abs() < 1e-9);
    }
}
