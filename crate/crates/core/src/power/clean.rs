//! Fleet cleaning: stations whose power statistics drift between periods are
//! rejected.

use std::fmt;

use chrono::{DateTime, Datelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PowerSeries, Station, StationInfo};
use crate::clearsky::solar_position;

/// Maximum relative difference of mean, std and skewness between periods.
pub const DEFAULT_TOLERANCE: f64 = 0.10;
const EPS: f64 = 1e-6;

/// How a record is split into the periods that are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleaningMode {
    /// Every calendar year against every other; needs two years of data.
    #[default]
    CalendarYear,
    /// First half of the record's time span against the second.
    Halves,
    /// Admit every station with a positive p95.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum RejectReason {
    /// Fewer than two periods with daylight data.
    SinglePeriod,
    Inconsistent { metric: String, relative_difference: f64 },
    NonPositiveP95,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::SinglePeriod => "single-period",
            RejectReason::Inconsistent { .. } => "inconsistent",
            RejectReason::NonPositiveP95 => "non-positive-p95",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Inconsistent { metric, relative_difference } => {
                write!(f, "inconsistent {metric} (relative difference {relative_difference:.3})")
            }
            other => f.write_str(other.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct CleaningReport {
    pub kept: Vec<Station>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodStats {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
}

/// Population moments; skewness is 0 for a constant sample.
pub fn period_stats(values: &[f64]) -> Option<PeriodStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Some(PeriodStats { mean, std: m2.sqrt(), skewness })
}

pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(EPS)
}

/// Largest relative difference among the three metrics, with its name.
fn worst_metric(a: &PeriodStats, b: &PeriodStats) -> (&'static str, f64) {
    [
        ("mean", relative_difference(a.mean, b.mean)),
        ("std", relative_difference(a.std, b.std)),
        ("skewness", relative_difference(a.skewness, b.skewness)),
    ]
    .into_iter()
    .fold(("mean", f64::NEG_INFINITY), |best, m| if m.1 > best.1 { m } else { best })
}

/// Daylight, non-missing values grouped into the periods of `mode`.
fn periods(info: &StationInfo, series: &PowerSeries, mode: CleaningMode) -> Vec<Vec<f64>> {
    let daylight = series
        .iter()
        .filter(|(t, v)| v.is_finite() && solar_position(info.lat, info.lon, *t).elevation > 0.0);
    match mode {
        CleaningMode::CalendarYear => {
            let mut by_year: std::collections::BTreeMap<i32, Vec<f64>> = Default::default();
            for (t, v) in daylight {
                by_year.entry(t.year()).or_default().push(v);
            }
            by_year.into_values().collect()
        }
        CleaningMode::Halves => {
            let (Some(first), Some(last)) = (series.timestamps.first(), series.timestamps.last()) else {
                return Vec::new();
            };
            let mid: DateTime<Utc> = *first + (*last - *first) / 2;
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (t, v) in daylight {
                if t <= mid { a.push(v) } else { b.push(v) }
            }
            [a, b].into_iter().filter(|p| !p.is_empty()).collect()
        }
        CleaningMode::Off => Vec::new(),
    }
}

/// Checks one station; `Ok` carries the admitted station.
pub fn check_station(
    info: StationInfo,
    series: PowerSeries,
    mode: CleaningMode,
    tolerance: f64,
) -> std::result::Result<Station, Rejection> {
    let reject = |id: &str, reason| Rejection { id: id.to_string(), reason };
    if mode != CleaningMode::Off {
        let stats: Vec<PeriodStats> = periods(&info, &series, mode).iter().filter_map(|p| period_stats(p)).collect();
        if stats.len() < 2 {
            return Err(reject(&info.id, RejectReason::SinglePeriod));
        }
        for (i, a) in stats.iter().enumerate() {
            for b in &stats[i + 1..] {
                let (metric, diff) = worst_metric(a, b);
                if diff > tolerance {
                    let reason = RejectReason::Inconsistent { metric: metric.to_string(), relative_difference: diff };
                    return Err(reject(&info.id, reason));
                }
            }
        }
    }
    let id = info.id.clone();
    Station::new(info, series).map_err(|_| reject(&id, RejectReason::NonPositiveP95))
}

/// Splits the fleet into admitted stations and rejections, in input order.
pub fn clean_fleet(fleet: Vec<(StationInfo, PowerSeries)>, mode: CleaningMode, tolerance: f64) -> CleaningReport {
    let results: Vec<_> = fleet
        .into_par_iter()
        .map(|(info, series)| check_station(info, series, mode, tolerance))
        .collect();
    let mut report = CleaningReport::default();
    for r in results {
        match r {
            Ok(s) => report.kept.push(s),
            Err(rej) => {
                log::info!("station {} rejected: {}", rej.id, rej.reason);
                report.rejected.push(rej);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn info() -> StationInfo {
        StationInfo { id: "s".into(), lon: 8.0, lat: 46.0, elevation_m: 500.0 }
    }

    /// Two calendar years of a daylight-shaped signal, year two scaled.
    fn two_years(scale2: f64) -> PowerSeries {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let n = 2 * 365 * 24;
        let ts: Vec<_> = (0..n).map(|k| t0 + Duration::hours(k)).collect();
        let vs = ts
            .iter()
            .map(|t| {
                let e = solar_position(46.0, 8.0, *t).elevation.max(0.0);
                let base = 10.0 * e.to_radians().sin();
                if t.year() == 2020 { base } else { base * scale2 }
            })
            .collect();
        PowerSeries::new(ts, vs).unwrap()
    }

    #[test]
    fn identical_years_kept() {
        // 2020 is a leap year, so the years differ by one day of geometry.
        let r = check_station(info(), two_years(1.0), CleaningMode::CalendarYear, DEFAULT_TOLERANCE);
        assert!(r.is_ok(), "{r:?}");
    }

    #[test]
    fn scaled_mean_rejected() {
        let r = check_station(info(), two_years(1.25), CleaningMode::CalendarYear, DEFAULT_TOLERANCE).unwrap_err();
        assert_eq!(r.reason.code(), "inconsistent");
    }

    #[test]
    fn small_spread_change_kept() {
        let a = period_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = PeriodStats { std: a.std * 1.05, ..a };
        assert!(worst_metric(&a, &b).1 <= DEFAULT_TOLERANCE);
    }

    #[test]
    fn single_year_undecidable() {
        let mut s = two_years(1.0);
        let keep = s.timestamps.iter().filter(|t| t.year() == 2020).count();
        s.timestamps.truncate(keep);
        s.values.truncate(keep);
        let r = check_station(info(), s, CleaningMode::CalendarYear, DEFAULT_TOLERANCE).unwrap_err();
        assert_eq!(r.reason, RejectReason::SinglePeriod);
    }
}
