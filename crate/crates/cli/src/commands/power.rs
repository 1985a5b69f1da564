//! Station model training and power prediction from SSI forecasts.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::Serialize;

use pvcast::forecast::ForecastSet;
use pvcast::grid::{interpolate_point, FieldKind};
use pvcast::power::{
    clean_fleet, load_fleet, predict_power, read_registry, split_nrmse, train_station_model, PowerForecast, Split,
    SplitPlan, SsiSeries, Station, StationInfo, StationModel, TrainingOptions,
};

use crate::config::{ModelKind, Paths, RunConfig};
use crate::error::{CliError, CliResult};
use crate::store::{ensure_dir, GridStore, OutputLayout};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingRow {
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    pub elevation_m: f64,
    pub p95: f64,
    pub n_trees: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub val_nrmse: Option<f64>,
    pub test_nrmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    pub station_id: String,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    pub report: Vec<TrainingRow>,
    pub rejected: Vec<RejectedRow>,
}

impl TrainSummary {
    pub fn mean_test_nrmse(&self) -> Option<f64> {
        let v: Vec<f64> = self.report.iter().filter_map(|r| r.test_nrmse).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// SSI interpolated at each station for every gridded instant.
pub fn station_irradiance(store: &GridStore, stations: &[StationInfo]) -> CliResult<Vec<SsiSeries>> {
    let instants = store.timestamps(FieldKind::Ssi)?;
    let rows: Vec<(DateTime<Utc>, Vec<Option<f64>>)> = instants
        .par_iter()
        .map(|&t| -> CliResult<_> {
            let field = store.read(FieldKind::Ssi, t)?.expect("listed grid exists");
            let values = stations
                .iter()
                .map(|s| interpolate_point(&field, s.lon, s.lat).map_err(CliError::from))
                .collect::<CliResult<Vec<_>>>()?;
            Ok((t, values))
        })
        .collect::<CliResult<_>>()?;
    let mut out = vec![SsiSeries::new(); stations.len()];
    for (t, values) in rows {
        for (series, v) in out.iter_mut().zip(values) {
            if let Some(v) = v {
                series.insert(t, v);
            }
        }
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &std::path::Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn train(config: &RunConfig) -> CliResult<TrainSummary> {
    let p = &config.paths;
    Paths::require(&[&p.registry, &p.series_dir, &p.grids_dir])?;
    let fleet = load_fleet(&p.registry, &p.series_dir)?;
    let cleaned = clean_fleet(fleet, config.power.cleaning, config.power.tolerance);
    let mut summary = TrainSummary::default();
    for r in &cleaned.rejected {
        summary.rejected.push(RejectedRow {
            station_id: r.id.clone(),
            code: r.reason.code().to_string(),
            detail: r.reason.to_string(),
        });
    }
    let stations: Vec<Station> = cleaned.kept;
    let layout = OutputLayout::new(&p.output_dir);
    ensure_dir(&layout.models())?;
    let dates = stations.iter().flat_map(|s| s.series.timestamps.iter().map(|t| t.date_naive()));
    let Some(plan) = SplitPlan::covering(dates) else {
        write_csv(&layout.training_report(), &summary.report)?;
        write_csv(&layout.rejected(), &summary.rejected)?;
        return Err(CliError::NothingDone("no station passed cleaning".into()));
    };
    let infos: Vec<StationInfo> = stations.iter().map(|s| s.info.clone()).collect();
    let ssi = station_irradiance(&GridStore::new(&p.grids_dir), &infos)?;
    let options = TrainingOptions {
        params: config.power.gbrt,
        search_trials: config.power.search_trials,
        seed: config.seed,
    };

    let results: Vec<CliResult<Result<TrainingRow, RejectedRow>>> = stations
        .par_iter()
        .zip(&ssi)
        .map(|(station, ssi)| {
            let model = match train_station_model(station, ssi, &plan, &options) {
                Ok(m) => m,
                Err(e) => {
                    return Ok(Err(RejectedRow {
                        station_id: station.id().to_string(),
                        code: "training".into(),
                        detail: e.to_string(),
                    }))
                }
            };
            model.save_json(layout.model_file(station.id()))?;
            Ok(Ok(TrainingRow {
                station_id: station.id().to_string(),
                lon: station.info.lon,
                lat: station.info.lat,
                elevation_m: station.info.elevation_m,
                p95: station.p95,
                n_trees: model.regressor.trees.len(),
                n_train: model.n_train,
                n_val: model.n_val,
                val_nrmse: split_nrmse(&model, station, ssi, &plan, Split::Val),
                test_nrmse: split_nrmse(&model, station, ssi, &plan, Split::Test),
            }))
        })
        .collect();
    for r in results {
        match r? {
            Ok(row) => summary.report.push(row),
            Err(rej) => {
                log::warn!("station {}: {}", rej.station_id, rej.detail);
                summary.rejected.push(rej);
            }
        }
    }
    summary.rejected.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    write_csv(&layout.training_report(), &summary.report)?;
    write_csv(&layout.rejected(), &summary.rejected)?;
    log::info!(
        "trained {} station model(s), rejected {}; mean test nRMSE {:?}",
        summary.report.len(),
        summary.rejected.len(),
        summary.mean_test_nrmse()
    );
    if summary.report.is_empty() {
        return Err(CliError::NothingDone("no station model could be trained".into()));
    }
    Ok(summary)
}

/// Every trained model with its registry entry, in registry order.
pub fn load_models(config: &RunConfig) -> CliResult<Vec<(StationInfo, StationModel)>> {
    let layout = OutputLayout::new(&config.paths.output_dir);
    Paths::require(&[&config.paths.registry, &layout.models()])?;
    let mut out = Vec::new();
    for info in read_registry(&config.paths.registry)? {
        let path = layout.model_file(&info.id);
        if path.exists() {
            out.push((info, StationModel::load_json(&path)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PowerRow {
    pub station_id: String,
    pub lead: usize,
    pub member: usize,
    pub valid_time: DateTime<Utc>,
    pub power_kw: Option<f64>,
}

pub fn write_power_csv(path: &std::path::Path, forecasts: &[PowerForecast]) -> CliResult<()> {
    let mut rows = Vec::new();
    for f in forecasts {
        for (l, lead) in f.values.iter().enumerate() {
            for (e, v) in lead.iter().enumerate() {
                rows.push(PowerRow {
                    station_id: f.station_id.clone(),
                    lead: l + 1,
                    member: e,
                    valid_time: f.valid_time(l + 1),
                    power_kw: *v,
                });
            }
        }
    }
    write_csv(path, &rows)
}

/// Reads a prediction file back into per-station forecasts.
pub fn read_power_csv(path: &std::path::Path, issue: DateTime<Utc>) -> CliResult<BTreeMap<String, PowerForecast>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out: BTreeMap<String, PowerForecast> = BTreeMap::new();
    for row in reader.deserialize::<PowerRow>() {
        let row = row?;
        let step = (row.valid_time - issue).num_seconds() / row.lead.max(1) as i64;
        let f = out.entry(row.station_id.clone()).or_insert_with(|| PowerForecast {
            station_id: row.station_id.clone(),
            issue_time: issue,
            step_secs: step,
            values: Vec::new(),
        });
        if f.values.len() < row.lead {
            f.values.resize(row.lead, Vec::new());
        }
        let lead = &mut f.values[row.lead - 1];
        if lead.len() <= row.member {
            lead.resize(row.member + 1, None);
        }
        lead[row.member] = row.power_kw;
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct PredictSummary {
    pub issues: usize,
    pub stations: usize,
}

pub fn predict(config: &RunConfig, model: ModelKind) -> CliResult<PredictSummary> {
    let models = load_models(config)?;
    if models.is_empty() {
        return Err(CliError::NothingDone("no trained station model found".into()));
    }
    let layout = OutputLayout::new(&config.paths.output_dir);
    let issues = layout.forecast_issues(model)?;
    if issues.is_empty() {
        return Err(CliError::NothingDone(format!("no {} forecasts to convert", model.name())));
    }
    ensure_dir(&layout.power(model))?;
    issues.par_iter().try_for_each(|&issue| -> CliResult<()> {
        let forecast = ForecastSet::read_dir(layout.forecast(model, issue))?;
        let preds = models
            .iter()
            .map(|(info, m)| predict_power(m, &forecast, info))
            .collect::<pvcast::Result<Vec<_>>>()?;
        write_power_csv(&layout.power_file(model, issue), &preds)
    })?;
    log::info!("{}: power predicted for {} issue time(s), {} station(s)", model.name(), issues.len(), models.len());
    Ok(PredictSummary { issues: issues.len(), stations: models.len() })
}
