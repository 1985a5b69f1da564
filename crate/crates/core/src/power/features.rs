//! Regression predictors: irradiance, sun geometry and cyclic time encodings.

use std::f64::consts::TAU;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::clearsky::solar_position;

pub const N_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["ssi", "sza", "azi", "sin_doy", "cos_doy", "sin_hod", "cos_hod"];
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn ssi(&self) -> f64 {
        self.0[0]
    }
    pub fn sza(&self) -> f64 {
        self.0[1]
    }
    pub fn azi(&self) -> f64 {
        self.0[2]
    }
    pub fn doy(&self) -> (f64, f64) {
        (self.0[3], self.0[4])
    }
    pub fn hod(&self) -> (f64, f64) {
        (self.0[5], self.0[6])
    }
}

/// Fractional UTC hour of day.
pub fn hour_of_day(t: DateTime<Utc>) -> f64 {
    t.num_seconds_from_midnight() as f64 / 3600.0
}

/// Days elapsed since 1 January 00:00 UTC of the same year.
pub fn day_of_year(t: DateTime<Utc>) -> f64 {
    t.ordinal0() as f64 + hour_of_day(t) / 24.0
}

pub fn cyclic(value: f64, period: f64) -> (f64, f64) {
    let a = TAU * value / period;
    (a.sin(), a.cos())
}

/// Features for irradiance `ssi` (W m⁻²) at the station and instant; `None`
/// when the irradiance is missing.
pub fn build_features(lon: f64, lat: f64, ssi: Option<f64>, t: DateTime<Utc>) -> Option<FeatureVector> {
    let ssi = ssi.filter(|s| s.is_finite())?.max(0.0);
    let pos = solar_position(lat, lon, t);
    let (sin_doy, cos_doy) = cyclic(day_of_year(t), DAYS_PER_YEAR);
    let (sin_hod, cos_hod) = cyclic(hour_of_day(t), 24.0);
    Some(FeatureVector([ssi, pos.zenith, pos.azimuth, sin_doy, cos_doy, sin_hod, cos_hod]))
}
