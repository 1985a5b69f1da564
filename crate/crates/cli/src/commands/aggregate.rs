//! National daily totals at the shortest lead and their relative error.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use pvcast::power::{read_registry, series_file_name, PowerSeries};
use pvcast::verify::{daily_relative_error, season_of, DailyErrorReport, DailyTotal};

use super::power::read_power_csv;
use crate::config::{ModelKind, Paths, RunConfig};
use crate::error::{CliError, CliResult};
use crate::store::{ensure_dir, OutputLayout};

#[derive(Debug, Clone, Serialize)]
struct DailyRow {
    date: NaiveDate,
    season: &'static str,
    predicted_kw: f64,
    measured_kw: f64,
    relative_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AggregateSummary {
    pub totals: Vec<DailyTotal>,
    pub report: DailyErrorReport,
}

/// Sums lead-1 ensemble means and the matching measurements per UTC day,
/// over the (station, time) pairs where both exist.
pub fn daily_totals(config: &RunConfig, model: ModelKind) -> CliResult<Vec<DailyTotal>> {
    let layout = OutputLayout::new(&config.paths.output_dir);
    let mut series = BTreeMap::new();
    for info in read_registry(&config.paths.registry)? {
        let path = config.paths.series_dir.join(series_file_name(&info.id));
        if path.exists() {
            series.insert(info.id.clone(), PowerSeries::read_csv(&path)?);
        }
    }
    let mut days: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
    for issue in layout.power_issues(model)? {
        let preds = read_power_csv(&layout.power_file(model, issue), issue)?;
        for (id, forecast) in &preds {
            let Some(measured) = series.get(id).and_then(|s| s.at(forecast.valid_time(1))) else {
                continue;
            };
            let members = forecast.members(1);
            if members.is_empty() || members.len() != forecast.values[0].len() {
                continue;
            }
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            let day = days.entry(forecast.valid_time(1).date_naive()).or_default();
            day.0 += mean;
            day.1 += measured;
        }
    }
    Ok(days
        .into_iter()
        .map(|(date, (predicted, measured))| DailyTotal { date, predicted, measured })
        .collect())
}

pub fn run(config: &RunConfig, model: ModelKind) -> CliResult<AggregateSummary> {
    let layout = OutputLayout::new(&config.paths.output_dir);
    Paths::require(&[&config.paths.registry, &config.paths.series_dir, &layout.power(model)])?;
    let totals = daily_totals(config, model)?;
    if totals.is_empty() {
        return Err(CliError::NothingDone(format!("no {} power forecast matches a measurement", model.name())));
    }
    let report = daily_relative_error(&totals)?;
    for (date, reason) in &report.excluded {
        log::info!("{date} excluded: {reason}");
    }

    let errors: BTreeMap<NaiveDate, f64> = report.days.iter().map(|d| (d.date, d.relative_error)).collect();
    let dir = layout.national();
    ensure_dir(&dir)?;
    let path = dir.join(format!("{}_daily.csv", model.name()));
    let mut w = csv::Writer::from_path(&path)?;
    for t in &totals {
        w.serialize(DailyRow {
            date: t.date,
            season: season_of(t.date).as_str(),
            predicted_kw: t.predicted,
            measured_kw: t.measured,
            relative_error: errors.get(&t.date).copied(),
        })?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let path = dir.join(format!("{}_summary.json", model.name()));
    let text = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    log::info!(
        "{}: {} day(s), {:.1}% below 1%, {:.1}% below 10%",
        model.name(),
        report.days.len(),
        100.0 * report.overall.frac_below_1pct,
        100.0 * report.overall.frac_below_10pct
    );
    Ok(AggregateSummary { totals, report })
}
