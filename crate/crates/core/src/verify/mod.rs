//! Forecast verification: deterministic and probabilistic scores, rank
//! histograms, weather-regime labels, stratified score tables and daily
//! fleet-total errors.

mod daily;
mod rank;
mod regimes;
mod table;

pub use daily::{daily_relative_error, season_of, DailyErrorReport, DailyTotal, DayError, Season, SeasonSummary};
pub use rank::{observation_rank, rank_histogram, RankHistogram};
pub use regimes::{classify_regimes, daily_csi_stats, DailyCsiStats, RegimeFlags, RegimeLabels, RegimeThresholds, MIN_REGIME_DAYS};
pub use table::{
    elevation_band, time_of_day, NeumaierSum, ScoreAccumulator, ScoreCell, ScoreTable, TimeOfDay, DEFAULT_ELEVATION_SPLIT,
    STRATUM_ALL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal risk level of the central prediction interval.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Ensemble forecast (members sorted ascending) with its observation and normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSample {
    members: Vec<f64>,
    observation: f64,
    normalizer: f64,
}

impl EnsembleSample {
    pub fn new(mut members: Vec<f64>, observation: f64, normalizer: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyInput);
        }
        if members.iter().any(|m| !m.is_finite()) || !observation.is_finite() {
            return Err(Error::InvalidParameter("ensemble members and observation must be finite".into()));
        }
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(Error::InvalidParameter(format!("normalizer must be > 0, got {normalizer}")));
        }
        members.sort_by(f64::total_cmp);
        Ok(Self { members, observation, normalizer })
    }

    pub fn members(&self) -> &[f64] {
        &self.members
    }

    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    pub fn observation(&self) -> f64 {
        self.observation
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn mean(&self) -> f64 {
        self.members.iter().sum::<f64>() / self.members.len() as f64
    }

    /// Normalized ensemble-mean error `(mean − y) / f`.
    pub fn normalized_error(&self) -> f64 {
        (self.mean() - self.observation) / self.normalizer
    }

    /// Empirical `p`-quantile, linear between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        empirical_quantile(&self.members, p)
    }

    /// Central `1 − alpha` interval; undefined for a single member.
    pub fn interval(&self, alpha: f64) -> Result<(f64, f64)> {
        if self.members.len() < 2 {
            return Err(Error::UndefinedInterval(self.members.len()));
        }
        Ok((self.quantile(alpha / 2.0), self.quantile(1.0 - alpha / 2.0)))
    }
}

/// Quantile of sorted data at position `p·(n−1)` (0-based), interpolating linearly.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// CRPS of the empirical ensemble CDF, divided by the normalizer.
pub fn crps(sample: &EnsembleSample) -> f64 {
    let e = sample.members.len() as f64;
    let y = sample.observation;
    let spread_to_obs: f64 = sample.members.iter().map(|x| (x - y).abs()).sum::<f64>() / e;
    // Σ_i Σ_j |x_i − x_j| = 2 Σ_i x_(i) (2i − E − 1) over sorted members, i 1-based.
    let pairwise: f64 = sample
        .members
        .iter()
        .enumerate()
        .map(|(i, x)| x * (2.0 * (i as f64 + 1.0) - e - 1.0))
        .sum::<f64>()
        * 2.0;
    (spread_to_obs - 0.5 * pairwise / (e * e)).max(0.0) / sample.normalizer
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicScores {
    pub nmae: f64,
    pub nrmse: f64,
    pub nmbe: f64,
}

/// Scores of the ensemble mean, each error divided by its sample's normalizer.
pub fn deterministic_scores(samples: &[EnsembleSample]) -> Result<DeterministicScores> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut abs, mut sq, mut bias) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
    for s in samples {
        let e = s.normalized_error();
        abs.add(e.abs());
        sq.add(e * e);
        bias.add(e);
    }
    let n = samples.len() as f64;
    Ok(DeterministicScores { nmae: abs.value() / n, nrmse: (sq.value() / n).sqrt(), nmbe: bias.value() / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalScores {
    pub picp: f64,
    pub pinaw: f64,
    pub mpiw: f64,
}

/// Coverage and width of the central `1 − alpha` interval (bounds inclusive).
pub fn interval_scores(samples: &[EnsembleSample], alpha: f64) -> Result<IntervalScores> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let (mut hits, mut width, mut nwidth) = (0usize, NeumaierSum::default(), NeumaierSum::default());
    for s in samples {
        let (lo, hi) = s.interval(alpha)?;
        if lo <= s.observation && s.observation <= hi {
            hits += 1;
        }
        width.add(hi - lo);
        nwidth.add((hi - lo) / s.normalizer);
    }
    let n = samples.len() as f64;
    Ok(IntervalScores { picp: hits as f64 / n, pinaw: nwidth.value() / n, mpiw: width.value() / n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(m: &[f64], y: f64, f: f64) -> EnsembleSample {
        EnsembleSample::new(m.to_vec(), y, f).unwrap()
    }

    #[test]
    fn crps_examples() {
        assert_eq!(crps(&s(&[1.0], 1.0, 1.0)), 0.0);
        assert!((crps(&s(&[0.0, 2.0], 1.0, 1.0)) - 0.5).abs() < 1e-15);
        assert_eq!(crps(&s(&[4.0], 1.0, 1.0)), 3.0);
    }

    #[test]
    fn deterministic_examples() {
        let d = deterministic_scores(&[s(&[3.0], 1.0, 2.0)]).unwrap();
        assert_eq!((d.nmae, d.nrmse, d.nmbe), (1.0, 1.0, 1.0));
        let perfect = deterministic_scores(&[s(&[2.0, 2.0], 2.0, 1.0), s(&[5.0], 5.0, 3.0)]).unwrap();
        assert_eq!((perfect.nmae, perfect.nrmse, perfect.nmbe), (0.0, 0.0, 0.0));
        assert!(matches!(deterministic_scores(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn quantile_rule() {
        let m: Vec<f64> = (0..10).map(f64::from).collect();
        let sample = s(&m, 0.0, 1.0);
        let (lo, hi) = sample.interval(0.1).unwrap();
        assert!((lo - 0.45).abs() < 1e-12 && (hi - 8.55).abs() < 1e-12);
    }

    #[test]
    fn interval_examples() {
        let degenerate = interval_scores(&[s(&[2.0, 2.0, 2.0], 2.0, 1.0)], 0.1).unwrap();
        assert_eq!((degenerate.picp, degenerate.pinaw), (1.0, 0.0));
        assert!(matches!(interval_scores(&[s(&[1.0], 1.0, 1.0)], 0.1), Err(Error::UndefinedInterval(1))));
    }

    #[test]
    fn sample_validation() {
        assert!(EnsembleSample::new(vec![], 1.0, 1.0).is_err());
        assert!(EnsembleSample::new(vec![1.0], 1.0, 0.0).is_err());
        assert!(EnsembleSample::new(vec![f64::NAN], 1.0, 1.0).is_err());
        assert_eq!(s(&[3.0, 1.0, 2.0], 0.0, 1.0).members(), &[1.0, 2.0, 3.0]);
    }
}
