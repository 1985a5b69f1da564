//! Per-station irradiance-to-power models and fleet-scale prediction.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::features::{build_features, FeatureVector, N_FEATURES};
use super::gbrt::{Dataset, Gbrt, GbrtParams};
use super::split::{Split, SplitPlan};
use super::{Station, StationInfo};
use crate::clearsky::solar_position;
use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::grid::{interpolate_point, FieldKind};

pub const MIN_TRAINING_SAMPLES: usize = 100;

/// Irradiance at a station, keyed by instant.
pub type SsiSeries = BTreeMap<DateTime<Utc>, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingOptions {
    pub params: GbrtParams,
    /// Random-search trials on the validation split; 0 uses `params` as is.
    pub search_trials: usize,
    pub seed: u64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self { params: GbrtParams::default(), search_trials: 0, seed: 0 }
    }
}

pub fn is_night(info: &StationInfo, t: DateTime<Utc>) -> bool {
    solar_position(info.lat, info.lon, t).elevation <= 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationModel {
    pub station_id: String,
    pub p95: f64,
    /// Training range of each feature, mapped onto [0, 1].
    pub feature_min: [f64; N_FEATURES],
    pub feature_max: [f64; N_FEATURES],
    pub regressor: Gbrt,
    pub n_train: usize,
    pub n_val: usize,
}

/// Daylight samples of one split: features and measured power.
pub fn station_samples(
    station: &Station,
    ssi: &SsiSeries,
    plan: &SplitPlan,
    split: Split,
) -> Vec<(DateTime<Utc>, FeatureVector, f64)> {
    let info = &station.info;
    station
        .series
        .iter()
        .filter(|(t, p)| p.is_finite() && plan.get(t.date_naive()) == Some(split) && !is_night(info, *t))
        .filter_map(|(t, p)| build_features(info.lon, info.lat, ssi.get(&t).copied(), t).map(|f| (t, f, p)))
        .collect()
}

impl StationModel {
    fn scale(&self, x: &FeatureVector) -> [f64; N_FEATURES] {
        scale_features(x, &self.feature_min, &self.feature_max)
    }

    /// Power in kW for given features, clipped to `[0, p95]`.
    pub fn predict_features(&self, x: &FeatureVector) -> f64 {
        self.regressor.predict(&self.scale(x)).clamp(0.0, 1.0) * self.p95
    }

    /// Power in kW at `t`; zero at night, `None` without irradiance.
    pub fn predict(&self, info: &StationInfo, ssi: Option<f64>, t: DateTime<Utc>) -> Option<f64> {
        if is_night(info, t) {
            return Some(0.0);
        }
        build_features(info.lon, info.lat, ssi, t).map(|x| self.predict_features(&x))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn scale_features(x: &FeatureVector, lo: &[f64; N_FEATURES], hi: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
    std::array::from_fn(|k| {
        let span = hi[k] - lo[k];
        if span > 0.0 { (x.0[k] - lo[k]) / span } else { 0.0 }
    })
}

fn flatten(
    samples: &[(DateTime<Utc>, FeatureVector, f64)],
    lo: &[f64; N_FEATURES],
    hi: &[f64; N_FEATURES],
    p95: f64,
) -> (Vec<f64>, Vec<f64>) {
    let x = samples.iter().flat_map(|(_, f, _)| scale_features(f, lo, hi)).collect();
    let y = samples.iter().map(|(_, _, p)| (p / p95).clamp(0.0, 1.0)).collect();
    (x, y)
}

/// Fits a station model on the training days, stopping early on the validation days.
pub fn train_station_model(
    station: &Station,
    ssi: &SsiSeries,
    plan: &SplitPlan,
    options: &TrainingOptions,
) -> Result<StationModel> {
    let train = station_samples(station, ssi, plan, Split::Train);
    if train.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::Training(format!(
            "station {}: {} daylight training samples, need {MIN_TRAINING_SAMPLES}",
            station.id(),
            train.len()
        )));
    }
    let val = station_samples(station, ssi, plan, Split::Val);
    let mut lo = [f64::INFINITY; N_FEATURES];
    let mut hi = [f64::NEG_INFINITY; N_FEATURES];
    for (_, f, _) in &train {
        for k in 0..N_FEATURES {
            lo[k] = lo[k].min(f.0[k]);
            hi[k] = hi[k].max(f.0[k]);
        }
    }
    let (tx, ty) = flatten(&train, &lo, &hi, station.p95);
    let (vx, vy) = flatten(&val, &lo, &hi, station.p95);
    let train_set = Dataset::new(&tx, &ty, N_FEATURES)?;
    let val_set = (!vy.is_empty()).then(|| Dataset::new(&vx, &vy, N_FEATURES)).transpose()?;
    let regressor = match (&val_set, options.search_trials) {
        (Some(v), n) if n > 0 => Gbrt::fit_search(&train_set, v, &options.params, n, options.seed)?,
        (v, _) => Gbrt::fit(&train_set, v.as_ref(), &options.params)?,
    };
    Ok(StationModel {
        station_id: station.id().to_string(),
        p95: station.p95,
        feature_min: lo,
        feature_max: hi,
        regressor,
        n_train: train.len(),
        n_val: val.len(),
    })
}

/// RMSE over the daylight samples of `split`, divided by p95.
pub fn split_nrmse(model: &StationModel, station: &Station, ssi: &SsiSeries, plan: &SplitPlan, split: Split) -> Option<f64> {
    let samples = station_samples(station, ssi, plan, split);
    if samples.is_empty() {
        return None;
    }
    let sq: f64 = samples.iter().map(|(_, f, p)| (model.predict_features(f) - p).powi(2)).sum();
    Some((sq / samples.len() as f64).sqrt() / station.p95)
}

/// Power forecast of one station; `values[lead − 1][member]`, `None` where
/// the irradiance was missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerForecast {
    pub station_id: String,
    pub issue_time: DateTime<Utc>,
    pub step_secs: i64,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PowerForecast {
    pub fn valid_time(&self, lead: usize) -> DateTime<Utc> {
        self.issue_time + Duration::seconds(self.step_secs * lead as i64)
    }

    pub fn n_leads(&self) -> usize {
        self.values.len()
    }

    /// Members at 1-based `lead` with a value.
    pub fn members(&self, lead: usize) -> Vec<f64> {
        self.values[lead - 1].iter().flatten().copied().collect()
    }
}

/// Runs the station model on every lead and member of an SSI forecast.
pub fn predict_power(model: &StationModel, forecast: &ForecastSet, info: &StationInfo) -> Result<PowerForecast> {
    if forecast.kind() != FieldKind::Ssi {
        return Err(Error::InvalidParameter(format!("power prediction needs SSI fields, got {:?}", forecast.kind())));
    }
    if model.station_id != info.id {
        return Err(Error::InvalidParameter(format!("model for {} applied to {}", model.station_id, info.id)));
    }
    let values = (1..=forecast.n_leads())
        .map(|lead| {
            let t = forecast.valid_time(lead);
            forecast
                .lead(lead)
                .iter()
                .map(|field| Ok(model.predict(info, interpolate_point(field, info.lon, info.lat)?, t)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerForecast {
        station_id: info.id.clone(),
        issue_time: forecast.issue_time,
        step_secs: forecast.step.num_seconds(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetTotal {
    pub total_kw: f64,
    pub n_included: usize,
    pub n_missing: usize,
}

/// Sum over stations with a value at (`lead`, `member`).
pub fn fleet_total(predictions: &[PowerForecast], lead: usize, member: usize) -> FleetTotal {
    let mut total = FleetTotal { total_kw: 0.0, n_included: 0, n_missing: 0 };
    for p in predictions {
        match p.values.get(lead - 1).and_then(|l| l.get(member)).copied().flatten() {
            Some(v) => {
                total.total_kw += v;
                total.n_included += 1;
            }
            None => total.n_missing += 1,
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn forecast(issue: DateTime<Utc>, values: &[&[Option<f64>]]) -> PowerForecast {
        PowerForecast {
            station_id: "x".into(),
            issue_time: issue,
            step_secs: 900,
            values: values.iter().map(|l| l.to_vec()).collect(),
        }
    }

    #[test]
    fn fleet_sums_and_counts() {
        let t = Utc.with_ymd_and_hms(2021, 6, 1, 10, 0, 0).unwrap();
        let preds = [forecast(t, &[&[Some(3.0)]]), forecast(t, &[&[Some(5.0)]]), forecast(t, &[&[None]])];
        let total = fleet_total(&preds, 1, 0);
        assert_eq!((total.total_kw, total.n_included, total.n_missing), (8.0, 2, 1));
        assert_eq!(preds[0].valid_time(1), t + Duration::minutes(15));
    }
}
