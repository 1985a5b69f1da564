//! Runs one nowcast model at every admissible issue time.

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;

use pvcast::cascade::{persistence_forecast, solarsteps_forecast, solarsteps_pa_forecast};
use pvcast::clearsky::{csi_to_ssi, ssi_to_csi};
use pvcast::forecast::ForecastSet;
use pvcast::grid::{FieldKind, FieldSequence, GridField};

use super::ClearSkyCache;
use crate::config::{ModelKind, Paths, RunConfig};
use crate::error::{CliError, CliResult};
use crate::schedule::{full_hours, issue_rejection};
use crate::store::{ensure_dir, GridStore, OutputLayout};

/// Cadence of the gridded input.
pub const INPUT_STEP_MINUTES: i64 = 15;

#[derive(Debug, Clone, Default)]
pub struct NowcastSummary {
    pub written: Vec<DateTime<Utc>>,
    pub skipped: Vec<(DateTime<Utc>, String)>,
}

enum Outcome {
    Written,
    Skipped(String),
}

pub fn run(config: &RunConfig, model: ModelKind, issue_times: &[DateTime<Utc>]) -> CliResult<NowcastSummary> {
    if model == ModelKind::External {
        return Err(CliError::Config("external forecasts are supplied, not generated".into()));
    }
    Paths::require(&[&config.paths.grids_dir])?;
    let store = GridStore::new(&config.paths.grids_dir);
    let instants = store.timestamps(FieldKind::Ssi)?;
    let (Some(&first), Some(&last)) = (instants.first(), instants.last()) else {
        return Err(CliError::NothingDone(format!("no SSI grids under {}", store.root().display())));
    };
    let geometry = store.read(FieldKind::Ssi, first)?.expect("listed grid exists").geometry;
    let (lon, lat) = geometry.center();

    let explicit = !issue_times.is_empty() || !config.schedule.issue_times.is_empty();
    let candidates: Vec<DateTime<Utc>> = if !issue_times.is_empty() {
        issue_times.to_vec()
    } else if explicit {
        config.schedule.issue_times.clone()
    } else {
        full_hours(first, last)
    };

    let mut summary = NowcastSummary::default();
    let mut admitted = Vec::new();
    for t in candidates {
        let s = &config.schedule;
        match issue_rejection(lat, lon, t, s.after_sunrise_h, s.before_sunset_h) {
            Some(reason) => {
                if explicit {
                    log::info!("skipping issue time {t}: {reason}");
                } else {
                    log::debug!("skipping issue time {t}: {reason}");
                }
                summary.skipped.push((t, reason));
            }
            None => admitted.push(t),
        }
    }

    let layout = OutputLayout::new(&config.paths.output_dir);
    let outcomes: Vec<(DateTime<Utc>, CliResult<Outcome>)> =
        admitted.par_iter().map(|&t| (t, run_issue(config, model, &store, &layout, t))).collect();
    for (t, outcome) in outcomes {
        match outcome? {
            Outcome::Written => summary.written.push(t),
            Outcome::Skipped(reason) => {
                log::info!("skipping issue time {t}: {reason}");
                summary.skipped.push((t, reason));
            }
        }
    }
    summary.skipped.sort_by_key(|(t, _)| *t);
    log::info!(
        "{}: {} forecast(s) written, {} issue time(s) skipped",
        model.name(),
        summary.written.len(),
        summary.skipped.len()
    );
    if summary.written.is_empty() {
        return Err(CliError::NothingDone(format!("no {} forecast could be issued", model.name())));
    }
    Ok(summary)
}

fn run_issue(
    config: &RunConfig,
    model: ModelKind,
    store: &GridStore,
    layout: &OutputLayout,
    issue: DateTime<Utc>,
) -> CliResult<Outcome> {
    let step = Duration::minutes(INPUT_STEP_MINUTES);
    let n_inputs = config.schedule.n_inputs;
    let mut inputs = Vec::with_capacity(n_inputs);
    for k in (0..n_inputs).rev() {
        let t = issue - step * k as i32;
        match store.read(FieldKind::Ssi, t)? {
            Some(f) => inputs.push(f),
            None => return Ok(Outcome::Skipped(format!("missing input field at {t}"))),
        }
    }
    let geometry = inputs[0].geometry;
    let mut clear = ClearSkyCache::new(geometry, config.clear_sky()?);
    let params = config.nowcast_params();

    let forecast = if model == ModelKind::Observed {
        let mut leads = Vec::with_capacity(params.n_leads);
        for l in 1..=params.n_leads {
            let t = issue + step * l as i32;
            let Some(obs) = store.read(FieldKind::Ssi, t)? else {
                return Ok(Outcome::Skipped(format!("missing observation at {t}")));
            };
            leads.push(vec![obs; config.schedule.observed_members]);
        }
        ForecastSet::new(model.name(), issue, step, config.seed, leads)?
    } else {
        let csi = inputs
            .iter()
            .map(|f| ssi_to_csi(f, clear.get(f.timestamp), &config.conversion))
            .collect::<pvcast::Result<Vec<GridField>>>()?;
        let seq = FieldSequence::with_step(csi, step)?;
        let result = match model {
            ModelKind::Persistence => persistence_forecast(&seq, params.n_leads),
            ModelKind::Solarsteps => solarsteps_forecast(&seq, &params),
            ModelKind::SolarstepsPa => solarsteps_pa_forecast(&seq, &params, &config.perturbation_params()),
            ModelKind::Observed | ModelKind::External => unreachable!(),
        };
        let csi_forecast = match result {
            Ok(f) => f,
            Err(e @ (pvcast::Error::DataQuality(_) | pvcast::Error::InsufficientData(_))) => {
                return Ok(Outcome::Skipped(e.to_string()));
            }
            Err(e) => return Err(e.into()),
        };
        csi_forecast.map_fields(|f| csi_to_ssi(f, clear.get(f.timestamp), &config.conversion))?
    };

    let dir = layout.forecast(model, issue);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    ensure_dir(&dir)?;
    let meta = serde_json::json!({
        "model": model.name(),
        "n_inputs": n_inputs,
        "nowcast": params,
        "perturbation": config.perturbation_params(),
        "conversion": config.conversion,
        "linke_turbidity": config.linke_turbidity,
    });
    forecast.write_dir(&dir, meta)?;
    Ok(Outcome::Written)
}
