//! Scores gridded SSI forecasts and station power forecasts.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rayon::prelude::*;

use pvcast::clearsky::{daylight_window, ssi_to_csi};
use pvcast::forecast::ForecastSet;
use pvcast::grid::{downsample, hourly_average, FieldKind, FieldSequence, GridField, FIELDS_PER_HOUR};
use pvcast::power::{is_night, read_registry, PowerSeries, StationInfo};
use pvcast::verify::{
    classify_regimes, daily_csi_stats, elevation_band, observation_rank, time_of_day, EnsembleSample, RankHistogram,
    RegimeLabels, ScoreAccumulator, ScoreTable, STRATUM_ALL,
};

use super::power::{load_models, read_power_csv};
use super::ClearSkyCache;
use crate::config::{ModelKind, Paths, RunConfig};
use crate::error::{CliError, CliResult};
use crate::store::{ensure_dir, GridStore, OutputLayout};

pub const SSI_SCORES: &str = "ssi_scores";
pub const POWER_SCORES: &str = "power_scores";

/// Forecasts with this step are hourly means and are compared against
/// hourly averages of the observations.
const HOURLY_STEP_SECS: i64 = 3600;

#[derive(Debug, Clone, Default)]
pub struct EvaluateSummary {
    pub ssi: Option<ScoreTable>,
    pub power: Option<ScoreTable>,
    pub ssi_ranks: BTreeMap<String, RankHistogram>,
    pub power_ranks: BTreeMap<String, RankHistogram>,
    pub regimes: Option<RegimeLabels>,
}

/// Scores plus rank counts gathered over a disjoint set of samples.
struct Partial {
    scores: ScoreAccumulator,
    ranks: Vec<u64>,
}

impl Partial {
    fn new(alpha: f64) -> CliResult<Self> {
        Ok(Self { scores: ScoreAccumulator::new(alpha)?, ranks: Vec::new() })
    }

    fn rank(&mut self, rank: usize, n_members: usize) -> CliResult<()> {
        if self.ranks.is_empty() {
            self.ranks = vec![0; n_members + 1];
        } else if self.ranks.len() != n_members + 1 {
            return Err(pvcast::Error::MixedEnsemble { expected: self.ranks.len() - 1, found: n_members }.into());
        }
        self.ranks[rank] += 1;
        Ok(())
    }

    fn merge(mut self, other: Partial) -> CliResult<Self> {
        if !self.ranks.is_empty() && !other.ranks.is_empty() && self.ranks.len() != other.ranks.len() {
            return Err(pvcast::Error::MixedEnsemble { expected: self.ranks.len() - 1, found: other.ranks.len() - 1 }.into());
        }
        if self.ranks.is_empty() {
            self.ranks = other.ranks;
        } else {
            self.ranks.iter_mut().zip(&other.ranks).for_each(|(a, b)| *a += b);
        }
        self.scores.merge(other.scores);
        Ok(self)
    }
}

fn model_key(model: ModelKind) -> u64 {
    model as u64
}

/// Weather regimes from the CSI of every observed field, grouped by UTC day.
pub fn regime_labels(config: &RunConfig, store: &GridStore) -> CliResult<Option<RegimeLabels>> {
    let instants = store.timestamps(FieldKind::Ssi)?;
    let mut by_day: BTreeMap<NaiveDate, Vec<DateTime<Utc>>> = BTreeMap::new();
    for t in instants {
        by_day.entry(t.date_naive()).or_default().push(t);
    }
    let clear_sky = config.clear_sky()?;
    let days: Vec<(NaiveDate, Vec<DateTime<Utc>>)> = by_day.into_iter().collect();
    let stats = days
        .par_iter()
        .map(|(date, times)| -> CliResult<_> {
            let mut csi = Vec::with_capacity(times.len());
            let mut clear = None;
            for &t in times {
                let ssi = store.read(FieldKind::Ssi, t)?.expect("listed grid exists");
                let cache = clear.get_or_insert_with(|| ClearSkyCache::new(ssi.geometry, clear_sky.clone()));
                csi.push(ssi_to_csi(&ssi, cache.get(t), &config.conversion)?);
            }
            let refs: Vec<&GridField> = csi.iter().collect();
            Ok(daily_csi_stats(*date, &refs))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let stats: Vec<_> = stats.into_iter().flatten().collect();
    match classify_regimes(&stats) {
        Ok(labels) => Ok(Some(labels)),
        Err(e) => {
            log::warn!("no regime strata: {e}");
            Ok(None)
        }
    }
}

fn regime_strata(labels: Option<&RegimeLabels>, date: NaiveDate) -> Vec<&'static str> {
    labels.and_then(|l| l.get(date)).map(|f| f.names()).unwrap_or_default()
}

fn tod_stratum(lat: f64, lon: f64, t: DateTime<Utc>) -> Option<&'static str> {
    let (rise, set) = daylight_window(lat, lon, t.date_naive()).ok()?;
    time_of_day(t, rise, set).map(|d| d.as_str())
}

/// Observation matching lead `lead` of `forecast`, downsampled.
fn observation_for(
    store: &GridStore,
    forecast: &ForecastSet,
    lead: usize,
    factor: usize,
) -> CliResult<Option<GridField>> {
    let t = forecast.valid_time(lead);
    let obs = if forecast.step.num_seconds() == HOURLY_STEP_SECS {
        let step = Duration::hours(1) / FIELDS_PER_HOUR as i32;
        let mut fields = Vec::with_capacity(FIELDS_PER_HOUR);
        for k in (0..FIELDS_PER_HOUR).rev() {
            match store.read(FieldKind::Ssi, t - step * k as i32)? {
                Some(f) => fields.push(f),
                None => return Ok(None),
            }
        }
        hourly_average(&FieldSequence::with_step(fields, step)?, t)?
    } else {
        match store.read(FieldKind::Ssi, t)? {
            Some(f) => f,
            None => return Ok(None),
        }
    };
    Ok(Some(coarsen(&obs, factor)?))
}

fn coarsen(field: &GridField, factor: usize) -> CliResult<GridField> {
    Ok(if factor > 1 { downsample(field, factor)? } else { field.clone() })
}

fn score_ssi_issue(
    config: &RunConfig,
    store: &GridStore,
    labels: Option<&RegimeLabels>,
    model: ModelKind,
    dir: &std::path::Path,
) -> CliResult<Partial> {
    let forecast = ForecastSet::read_dir(dir)?;
    let mut part = Partial::new(config.alpha)?;
    let factor = config.evaluate.downsample;
    let (lon, lat) = forecast.geometry().center();
    for lead in 1..=forecast.n_leads() {
        let t = forecast.valid_time(lead);
        let Some(obs) = observation_for(store, &forecast, lead, factor)? else {
            log::debug!("{}: no observation at {t}", model.name());
            continue;
        };
        let members = forecast.lead(lead).iter().map(|f| coarsen(f, factor)).collect::<CliResult<Vec<_>>>()?;
        let mut strata = vec![STRATUM_ALL];
        strata.extend(regime_strata(labels, forecast.issue_time.date_naive()));
        strata.extend(tod_stratum(lat, lon, t));
        let lead_min = forecast.lead_minutes(lead);
        for (p, &y) in obs.values.iter().enumerate() {
            if y.is_nan() || members.iter().any(|m| m.values[p].is_nan()) {
                continue;
            }
            let values = members.iter().map(|m| m.values[p] as f64).collect();
            let sample = EnsembleSample::new(values, y as f64, 1.0)?;
            part.scores.add_strata(model.name(), lead_min, &strata, p as u64, &sample);
            let key = [model_key(model), forecast.issue_time.timestamp() as u64, lead as u64, p as u64];
            part.rank(observation_rank(&sample, config.seed, &key), sample.ensemble_size())?;
        }
    }
    Ok(part)
}

fn evaluate_ssi(
    config: &RunConfig,
    store: &GridStore,
    labels: Option<&RegimeLabels>,
    summary: &mut EvaluateSummary,
) -> CliResult<()> {
    let layout = OutputLayout::new(&config.paths.output_dir);
    let mut scores = ScoreAccumulator::new(config.alpha)?;
    for &model in &config.evaluate.models {
        let issues = layout.forecast_issues(model)?;
        if issues.is_empty() {
            log::info!("{}: no SSI forecasts to evaluate", model.name());
            continue;
        }
        let part = issues
            .par_iter()
            .map(|&issue| score_ssi_issue(config, store, labels, model, &layout.forecast(model, issue)))
            .try_reduce(|| Partial::new(config.alpha).expect("alpha validated"), Partial::merge)?;
        if !part.ranks.is_empty() {
            summary.ssi_ranks.insert(model.name().to_string(), RankHistogram::from_counts(part.ranks));
        }
        scores.merge(part.scores);
    }
    if !scores.is_empty() {
        summary.ssi = Some(scores.finish());
    }
    Ok(())
}

/// Split between elevation bands: configured, or the median of the fleet.
fn elevation_split(config: &RunConfig, stations: &[StationInfo]) -> f64 {
    if !config.evaluate.elevation_split_from_data || stations.is_empty() {
        return config.evaluate.elevation_split_m;
    }
    let mut e: Vec<f64> = stations.iter().map(|s| s.elevation_m).collect();
    e.sort_by(f64::total_cmp);
    pvcast::verify::empirical_quantile(&e, 0.5)
}

fn evaluate_power(
    config: &RunConfig,
    labels: Option<&RegimeLabels>,
    summary: &mut EvaluateSummary,
) -> CliResult<()> {
    let layout = OutputLayout::new(&config.paths.output_dir);
    if !layout.models().exists() || !config.paths.series_dir.exists() {
        log::info!("no trained power models or measurements; skipping power scores");
        return Ok(());
    }
    let models = load_models(config)?;
    let registry = read_registry(&config.paths.registry)?;
    let split = elevation_split(config, &registry);
    let unit_of: BTreeMap<&str, u64> = registry.iter().enumerate().map(|(k, s)| (s.id.as_str(), k as u64)).collect();
    let series: BTreeMap<String, PowerSeries> = models
        .par_iter()
        .filter_map(|(info, _)| {
            let path = config.paths.series_dir.join(pvcast::power::series_file_name(&info.id));
            path.exists().then(|| PowerSeries::read_csv(&path).map(|s| (info.id.clone(), s)))
        })
        .collect::<pvcast::Result<_>>()?;

    let mut scores = ScoreAccumulator::new(config.alpha)?;
    for &model in &config.evaluate.models {
        let issues = layout.power_issues(model)?;
        if issues.is_empty() {
            log::info!("{}: no power forecasts to evaluate", model.name());
            continue;
        }
        let part = issues
            .par_iter()
            .map(|&issue| -> CliResult<Partial> {
                let preds = read_power_csv(&layout.power_file(model, issue), issue)?;
                let mut part = Partial::new(config.alpha)?;
                let regimes = regime_strata(labels, issue.date_naive());
                for (info, station_model) in &models {
                    let (Some(pred), Some(measured)) = (preds.get(&info.id), series.get(&info.id)) else {
                        continue;
                    };
                    let unit = unit_of[info.id.as_str()];
                    for lead in 1..=pred.n_leads() {
                        let t = pred.valid_time(lead);
                        let y = measured.at(t);
                        if is_night(info, t) || !y.is_some_and(f64::is_finite) {
                            continue;
                        }
                        let Some(members) = pred.values[lead - 1].iter().copied().collect::<Option<Vec<f64>>>() else {
                            continue;
                        };
                        let sample = EnsembleSample::new(members, y.unwrap(), station_model.p95)?;
                        let mut strata = vec![STRATUM_ALL, elevation_band(info.elevation_m, split)];
                        strata.extend(regimes.iter().copied());
                        strata.extend(tod_stratum(info.lat, info.lon, t));
                        let lead_min = (t - issue).num_minutes();
                        part.scores.add_strata(model.name(), lead_min, &strata, unit, &sample);
                        let key = [model_key(model), issue.timestamp() as u64, lead as u64, unit];
                        part.rank(observation_rank(&sample, config.seed, &key), sample.ensemble_size())?;
                    }
                }
                Ok(part)
            })
            .try_reduce(|| Partial::new(config.alpha).expect("alpha validated"), Partial::merge)?;
        if !part.ranks.is_empty() {
            summary.power_ranks.insert(model.name().to_string(), RankHistogram::from_counts(part.ranks));
        }
        scores.merge(part.scores);
    }
    if !scores.is_empty() {
        summary.power = Some(scores.finish());
    }
    Ok(())
}

fn write_text(path: &std::path::Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run(config: &RunConfig) -> CliResult<EvaluateSummary> {
    Paths::require(&[&config.paths.grids_dir, &config.paths.output_dir])?;
    let store = GridStore::new(&config.paths.grids_dir);
    let mut summary = EvaluateSummary { regimes: regime_labels(config, &store)?, ..Default::default() };
    let labels = summary.regimes.clone();
    evaluate_ssi(config, &store, labels.as_ref(), &mut summary)?;
    if config.paths.registry.exists() {
        evaluate_power(config, labels.as_ref(), &mut summary)?;
    }
    if summary.ssi.is_none() && summary.power.is_none() {
        return Err(CliError::NothingDone("no forecast overlaps the observations".into()));
    }

    let dir = OutputLayout::new(&config.paths.output_dir).scores();
    ensure_dir(&dir)?;
    for (name, table) in [(SSI_SCORES, &summary.ssi), (POWER_SCORES, &summary.power)] {
        if let Some(table) = table {
            table.save_csv(dir.join(format!("{name}.csv")))?;
            table.save_json(dir.join(format!("{name}.json")))?;
        }
    }
    for (prefix, ranks) in [("rank_ssi", &summary.ssi_ranks), ("rank_power", &summary.power_ranks)] {
        for (model, hist) in ranks {
            write_text(&dir.join(format!("{prefix}_{model}.csv")), &hist.to_csv())?;
            log::info!("{prefix} {model}: chi2 {:.2}, p {:.3}", hist.chi_square, hist.p_value);
        }
    }
    if let Some(labels) = &summary.regimes {
        let text = serde_json::to_string_pretty(labels)? + "\n";
        write_text(&dir.join("regimes.json"), &text)?;
    }
    Ok(summary)
}
