//! Rank (Talagrand) histograms with a chi-square uniformity statistic.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EnsembleSample;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    /// `counts[r]` samples had `r` members below the observation.
    pub counts: Vec<u64>,
    pub chi_square: f64,
    /// Upper-tail probability of `chi_square` with `E` degrees of freedom.
    pub p_value: f64,
}

impl RankHistogram {
    pub fn n_samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_samples().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Histogram with its uniformity statistic computed from raw counts.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let e = counts.len().saturating_sub(1);
        let n: u64 = counts.iter().sum();
        let expected = n as f64 / counts.len().max(1) as f64;
        let chi_square: f64 = if n == 0 {
            0.0
        } else {
            counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
        };
        let p_value = if e == 0 || n == 0 {
            1.0
        } else {
            ChiSquared::new(e as f64).map(|d| d.sf(chi_square)).unwrap_or(f64::NAN)
        };
        Self { counts, chi_square, p_value }
    }

    /// `rank,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,count\n");
        for (r, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{r},{c}\n"));
        }
        out
    }
}

/// Counts observation ranks. Members equal to the observation are split at
/// random: the rank is uniform over the positions the tie allows.
pub fn rank_histogram(samples: &[EnsembleSample], seed: u64) -> Result<RankHistogram> {
    let Some(first) = samples.first() else {
        return Err(Error::EmptyInput);
    };
    let e = first.ensemble_size();
    let mut rng = keyed_rng(seed, Stream::RankTies, &[]);
    let mut counts = vec![0u64; e + 1];
    for s in samples {
        if s.ensemble_size() != e {
            return Err(Error::MixedEnsemble { expected: e, found: s.ensemble_size() });
        }
        let y = s.observation();
        let below = s.members().partition_point(|&x| x < y);
        let ties = s.members()[below..].partition_point(|&x| x == y);
        let rank = if ties == 0 { below } else { below + rng.random_range(0..=ties) };
        counts[rank] += 1;
    }
    Ok(RankHistogram::from_counts(counts))
}

/// Rank of one observation with ties broken by an RNG keyed on `key`, so
/// samples can be ranked independently of each other and in any order.
pub fn observation_rank(sample: &EnsembleSample, seed: u64, key: &[u64]) -> usize {
    let y = sample.observation();
    let below = sample.members().partition_point(|&x| x < y);
    let ties = sample.members()[below..].partition_point(|&x| x == y);
    if ties == 0 {
        below
    } else {
        below + keyed_rng(seed, Stream::RankTies, key).random_range(0..=ties)
    }
}
