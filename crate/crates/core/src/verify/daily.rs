//! Relative error of daily fleet totals, overall and by season.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meteorological seasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Spring, Season::Summer, Season::Autumn, Season::Winter];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn season_of(date: NaiveDate) -> Season {
    match date.month() {
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        9..=11 => Season::Autumn,
        _ => Season::Winter,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyTotal {
    pub date: NaiveDate,
    pub predicted: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayError {
    pub date: NaiveDate,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonSummary {
    pub n_days: usize,
    pub mean: f64,
    pub median: f64,
    pub frac_below_1pct: f64,
    pub frac_below_10pct: f64,
}

impl SeasonSummary {
    fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let frac = |limit: f64| errors.iter().filter(|&&e| e < limit).count() as f64 / n;
        Some(Self {
            n_days: errors.len(),
            mean: errors.iter().sum::<f64>() / n,
            median: super::empirical_quantile(&sorted, 0.5),
            frac_below_1pct: frac(0.01),
            frac_below_10pct: frac(0.10),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyErrorReport {
    pub days: Vec<DayError>,
    /// Days left out, with the reason.
    pub excluded: Vec<(NaiveDate, String)>,
    pub overall: SeasonSummary,
    pub by_season: BTreeMap<Season, SeasonSummary>,
}

/// `|Σ pred − Σ meas| / Σ meas` per day. Days whose measured total is not
/// positive are excluded.
pub fn daily_relative_error(totals: &[DailyTotal]) -> Result<DailyErrorReport> {
    let mut days = Vec::new();
    let mut excluded = Vec::new();
    for t in totals {
        if !(t.measured > 0.0) || !t.predicted.is_finite() {
            let reason = if t.predicted.is_finite() { "measured total is not positive" } else { "predicted total is not finite" };
            excluded.push((t.date, reason.to_string()));
            continue;
        }
        days.push(DayError { date: t.date, relative_error: (t.predicted - t.measured).abs() / t.measured });
    }
    let errors: Vec<f64> = days.iter().map(|d| d.relative_error).collect();
    let overall = SeasonSummary::from_errors(&errors)
        .ok_or_else(|| Error::InsufficientData("no day with a positive measured total".into()))?;
    let by_season = Season::ALL
        .iter()
        .filter_map(|&season| {
            let e: Vec<f64> = days.iter().filter(|d| season_of(d.date) == season).map(|d| d.relative_error).collect();
            SeasonSummary::from_errors(&e).map(|s| (season, s))
        })
        .collect();
    Ok(DailyErrorReport { days, excluded, overall, by_season })
}
