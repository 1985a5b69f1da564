//! Weather-regime labels from daily statistics of the input CSI fields.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::empirical_quantile;
use crate::error::{Error, Result};
use crate::grid::GridField;

/// Fewer days make the quartiles meaningless.
pub const MIN_REGIME_DAYS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyCsiStats {
    pub date: NaiveDate,
    pub mean: f64,
    pub std: f64,
}

/// Mean and standard deviation of every finite pixel of the day's fields,
/// pooled. `None` when no pixel is finite.
pub fn daily_csi_stats(date: NaiveDate, fields: &[&GridField]) -> Option<DailyCsiStats> {
    let values = fields.iter().flat_map(|f| f.values.iter()).filter(|v| v.is_finite()).map(|&v| v as f64);
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        sum += v;
        sq += v * v;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let std = (sq / n as f64 - mean * mean).max(0.0).sqrt();
    Some(DailyCsiStats { date, mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub mean_q25: f64,
    pub mean_q75: f64,
    pub std_q25: f64,
    pub std_q75: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeFlags {
    pub cloudy: bool,
    pub sunny: bool,
    pub lowvar: bool,
    pub highvar: bool,
}

impl RegimeFlags {
    /// Names of the set flags, or `["none"]`.
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (on, name) in [(self.cloudy, "cloudy"), (self.sunny, "sunny"), (self.lowvar, "lowvar"), (self.highvar, "highvar")] {
            if on {
                out.push(name);
            }
        }
        if out.is_empty() {
            out.push("none");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabels {
    pub thresholds: RegimeThresholds,
    pub days: BTreeMap<NaiveDate, RegimeFlags>,
}

impl RegimeLabels {
    pub fn get(&self, date: NaiveDate) -> Option<RegimeFlags> {
        self.days.get(&date).copied()
    }

    pub fn count(&self, pick: impl Fn(&RegimeFlags) -> bool) -> usize {
        self.days.values().filter(|f| pick(f)).count()
    }
}

/// Days with mean CSI strictly below the 25th percentile are cloudy, above the
/// 75th sunny; the same rule on the daily std gives low/high variability.
pub fn classify_regimes(days: &[DailyCsiStats]) -> Result<RegimeLabels> {
    if days.len() < MIN_REGIME_DAYS {
        return Err(Error::InsufficientData(format!(
            "regime classification needs >= {MIN_REGIME_DAYS} days, got {}",
            days.len()
        )));
    }
    let sorted = |pick: fn(&DailyCsiStats) -> f64| {
        let mut v: Vec<f64> = days.iter().map(pick).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let means = sorted(|d| d.mean);
    let stds = sorted(|d| d.std);
    let thresholds = RegimeThresholds {
        mean_q25: empirical_quantile(&means, 0.25),
        mean_q75: empirical_quantile(&means, 0.75),
        std_q25: empirical_quantile(&stds, 0.25),
        std_q75: empirical_quantile(&stds, 0.75),
    };
    let t = thresholds;
    let days = days
        .iter()
        .map(|d| {
            let flags = RegimeFlags {
                cloudy: d.mean < t.mean_q25,
                sunny: d.mean > t.mean_q75,
                lowvar: d.std < t.std_q25,
                highvar: d.std > t.std_q75,
            };
            (d.date, flags)
        })
        .collect();
    Ok(RegimeLabels { thresholds, days })
}
