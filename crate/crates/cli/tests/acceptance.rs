//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration as Elapsed, Instant};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use pvcast::cascade::{
    decompose, fit_ar2, persistence_forecast, solarsteps_forecast, solarsteps_pa_forecast, NowcastConfig,
};
use pvcast::clearsky::ClearSkyParams;
use pvcast::flow::{advect, estimate_flow, FlowField, PerturbationParams};
use pvcast::forecast::ForecastSet;
use pvcast::grid::{read_grid, write_grid, FieldKind, FieldSequence, GridField, GridGeometry};
use pvcast::power::CleaningMode;
use pvcast::verify::{crps, deterministic_scores, interval_scores, rank_histogram, EnsembleSample};
use pvcast_cli::commands::{aggregate, evaluate, nowcast, power, synth};
use pvcast_cli::config::{ModelKind, RunConfig};
use pvcast_cli::schedule::issue_rejection;
use pvcast_cli::store::OutputLayout;
use pvcast_cli::synth::{Regime, SynthManifest, SyntheticSpec, SyntheticWorld};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Elapsed, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    }
}

// Oracles --------------------------------------------------------------------

/// Exact integral of (F(z) − 1{y ≤ z})² between consecutive knots.
fn crps_by_integration(members: &[f64], y: f64) -> f64 {
    let e = members.len() as f64;
    let mut knots = members.to_vec();
    knots.push(y);
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|w| {
            let z = 0.5 * (w[0] + w[1]);
            let f = members.iter().filter(|&&x| x <= z).count() as f64 / e;
            let h = if y <= z { 1.0 } else { 0.0 };
            (f - h).powi(2) * (w[1] - w[0])
        })
        .sum()
}

/// Expected coverage of the interpolated order-statistic interval for an
/// exchangeable observation: the k-th of E uniform order statistics has mean
/// k/(E+1).
fn effective_coverage(e: usize, alpha: f64) -> f64 {
    let at = |h: f64| {
        let lo = h.floor();
        let a = (lo + 1.0) / (e as f64 + 1.0);
        let b = (lo + 2.0).min(e as f64) / (e as f64 + 1.0);
        a + (h - lo) * (b - a)
    };
    let n = (e - 1) as f64;
    at((1.0 - alpha / 2.0) * n) - at(alpha / 2.0 * n)
}

fn texture(x: f64, y: f64) -> f64 {
    const WAVES: [(f64, f64, f64, f64); 5] = [
        (0.21, 0.05, 0.3, 0.0),
        (-0.07, 0.17, 0.2, 1.3),
        (0.11, -0.13, 0.15, 2.1),
        (0.04, 0.29, 0.1, 0.4),
        (0.33, 0.19, 0.05, 5.0),
    ];
    0.6 + WAVES.iter().map(|&(kx, ky, a, p)| a * (kx * x + ky * y + p).sin()).sum::<f64>()
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 10, 10, 0, 0).unwrap()
}

fn shifted(g: GridGeometry, t: DateTime<Utc>, sx: f64, sy: f64) -> GridField {
    let values = (0..g.len()).map(|k| texture((k % g.n_cols) as f64 - sx, (k / g.n_cols) as f64 - sy) as f32).collect();
    GridField::new(g, t, FieldKind::Csi, values).unwrap()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// Criteria -------------------------------------------------------------------

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let e = rng.random_range(1..=16);
        let members: Vec<f64> = (0..e).map(|_| rng.random_range(-50.0..50.0)).collect();
        let y = rng.random_range(-60.0..60.0);
        let oracle = crps_by_integration(&members, y);
        let got = crps(&EnsembleSample::new(members, y, 1.0).unwrap());
        worst = worst.max((got - oracle).abs() / oracle.abs().max(1e-12));
    }
    within(Elapsed::from_secs(10), start)?;
    check(worst <= 1e-6, format!("max relative deviation {worst:.2e} over 1000 ensembles"))
}

fn deterministic_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let x = rng.random_range(-100.0..100.0);
        let y = rng.random_range(-100.0..100.0);
        let s = EnsembleSample::new(vec![x], y, 1.0).unwrap();
        let mae = deterministic_scores(std::slice::from_ref(&s)).unwrap().nmae;
        mismatches += usize::from(crps(&s) != mae || mae != (x - y).abs());
    }
    check(mismatches == 0, format!("{mismatches} of 1000 samples differ from the MAE"))
}

fn calibration() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<EnsembleSample> = (0..100_000)
        .map(|_| {
            let members: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            EnsembleSample::new(members, rng.sample(StandardNormal), 1.0).unwrap()
        })
        .collect();
    let hist = rank_histogram(&samples, 3).map_err(|e| e.to_string())?;
    let picp = interval_scores(&samples, 0.1).map_err(|e| e.to_string())?.picp;
    let target = effective_coverage(10, 0.1);
    within(Elapsed::from_secs(30), start)?;
    check(
        hist.p_value > 0.01 && (picp - target).abs() <= 0.03,
        format!("rank p-value {:.3}; PICP {picp:.4} vs effective coverage {target:.4}", hist.p_value),
    )
}

fn cascade_round_trip() -> Outcome {
    let g = GridGeometry::new(8.0, 46.0, 0.02, 128, 128).unwrap();
    let errors: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f32> = (0..g.len()).map(|_| rng.random_range(0.0f32..1.2)).collect();
            let f = GridField::new(g, t0(), FieldKind::Csi, values).unwrap();
            let back = decompose(&f, 6).unwrap().recompose();
            let num: f64 = back.iter().zip(&f.values).map(|(a, &b)| (a - b as f64).powi(2)).sum();
            let den: f64 = f.values.iter().map(|&b| (b as f64).powi(2)).sum();
            (num / den).sqrt()
        })
        .collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = vec![0.0f64; 2];
    for _ in 0..10_000 + 500 {
        let n = x.len();
        let e: f64 = rng.sample(StandardNormal);
        x.push(0.6 * x[n - 1] + 0.2 * x[n - 2] + e);
    }
    let series: Vec<[f64; 1]> = x[x.len() - 10_000..].iter().map(|&v| [v]).collect();
    let history: Vec<&[f64]> = series.iter().map(|a| a.as_slice()).collect();
    let ar = fit_ar2(&history, None).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-5 && (ar.phi1 - 0.6).abs() <= 0.05 && (ar.phi2 - 0.2).abs() <= 0.05,
        format!("worst relative L2 {worst:.2e}; fitted phi ({:.3}, {:.3})", ar.phi1, ar.phi2),
    )
}

fn flow_recovery() -> Outcome {
    let g = GridGeometry::new(8.0, 46.0, 0.02, 96, 96).unwrap();
    let (u, v) = (2.0, -1.0);
    let fields = (0..4)
        .map(|s| shifted(g, t0() + Duration::minutes(15 * s), u * s as f64, v * s as f64))
        .collect();
    let seq = FieldSequence::new(fields).map_err(|e| e.to_string())?;
    let flow = estimate_flow(&seq).map_err(|e| e.to_string())?;
    let med = median((0..g.len()).map(|k| (flow.u[k] as f64 - u).hypot(flow.v[k] as f64 - v)).collect());

    let ahead = advect(seq.last(), &FlowField::uniform(g, u as f32, v as f32), 1).map_err(|e| e.to_string())?;
    let expected = shifted(g, t0(), 4.0 * u, 4.0 * v);
    let (lo, hi) = expected.values.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x as f64), b.max(x as f64)));
    let margin = 4;
    let (mut sq, mut n) = (0.0, 0usize);
    for i in margin..g.n_rows - margin {
        for j in margin..g.n_cols - margin {
            sq += (ahead.get(i, j) as f64 - expected.get(i, j) as f64).powi(2);
            n += 1;
        }
    }
    let rel = (sq / n as f64).sqrt() / (hi - lo);
    check(med <= 0.3 && rel <= 1e-3, format!("median vector error {med:.3} px; interior RMSE {rel:.2e} of range"))
}

struct OrderingRun {
    /// Mean grid CRPS per model and lead.
    crps: BTreeMap<&'static str, Vec<f64>>,
    /// SolarSTEPS mean interval width per lead.
    mpiw: Vec<f64>,
    n_issues: usize,
}

fn advecting_world() -> SyntheticWorld {
    let spec = SyntheticSpec {
        n_days: 24,
        n_rows: 128,
        n_cols: 128,
        regimes: vec![Regime::Advecting],
        velocity: [2.4, -1.8],
        n_blobs: 60,
        n_stations: 1,
        seed: 6,
        ..Default::default()
    };
    SyntheticWorld::new(&spec, ClearSkyParams::constant(3.0, 0.0).unwrap()).unwrap()
}

fn ordering_run() -> Result<OrderingRun, String> {
    let world = advecting_world();
    let g = world.csi_field(t0()).geometry;
    let (lon, lat) = g.center();
    let issues: Vec<DateTime<Utc>> = world
        .instants()
        .into_iter()
        .filter(|&t| issue_rejection(lat, lon, t, 1.0, 3.0).is_none())
        .take(200)
        .collect();
    if issues.len() < 200 {
        return Err(format!("only {} admissible issue times", issues.len()));
    }
    let step = Duration::minutes(15);
    let cfg = NowcastConfig { seed: 6, ..Default::default() };
    let pert = PerturbationParams { seed: 6, ..Default::default() };
    let n_leads = cfg.n_leads;

    // Per issue: (model, lead) -> (CRPS sum, n) and SolarSTEPS (width sum, n).
    type IssueSums = (BTreeMap<(&'static str, usize), (f64, usize)>, Vec<(f64, usize)>);
    let per_issue: Vec<Result<IssueSums, String>> = issues
        .par_iter()
        .map(|&issue| {
            let inputs = (0..4).rev().map(|k| world.csi_field(issue - step * k)).collect();
            let seq = FieldSequence::with_step(inputs, step).map_err(|e| e.to_string())?;
            let runs: [(&'static str, ForecastSet); 3] = [
                ("persistence", persistence_forecast(&seq, n_leads).map_err(|e| e.to_string())?),
                ("solarsteps", solarsteps_forecast(&seq, &cfg).map_err(|e| e.to_string())?),
                ("solarsteps-pa", solarsteps_pa_forecast(&seq, &cfg, &pert).map_err(|e| e.to_string())?),
            ];
            let mut sums = BTreeMap::new();
            let mut widths = vec![(0.0, 0usize); n_leads];
            for lead in 1..=n_leads {
                let obs = world.csi_field(issue + step * lead as i32);
                // Score every model on the same pixels.
                let valid: Vec<bool> = (0..g.len())
                    .map(|p| runs.iter().all(|(_, f)| f.lead(lead).iter().all(|m| m.values[p].is_finite())))
                    .collect();
                for (name, f) in &runs {
                    let (mut total, mut n) = (0.0, 0usize);
                    for p in (0..g.len()).filter(|&p| valid[p]) {
                        let members = f.lead(lead).iter().map(|m| m.values[p] as f64).collect();
                        let s = EnsembleSample::new(members, obs.values[p] as f64, 1.0).map_err(|e| e.to_string())?;
                        total += crps(&s);
                        n += 1;
                        if *name == "solarsteps" {
                            let (lo, hi) = s.interval(0.1).map_err(|e| e.to_string())?;
                            widths[lead - 1].0 += hi - lo;
                            widths[lead - 1].1 += 1;
                        }
                    }
                    sums.insert((*name, lead), (total, n));
                }
            }
            Ok((sums, widths))
        })
        .collect();

    let mut totals: BTreeMap<(&'static str, usize), (f64, usize)> = BTreeMap::new();
    let mut widths = vec![(0.0, 0usize); n_leads];
    for r in per_issue {
        let (sums, w) = r?;
        for (k, (s, n)) in sums {
            let e = totals.entry(k).or_default();
            e.0 += s;
            e.1 += n;
        }
        for (acc, (s, n)) in widths.iter_mut().zip(w) {
            acc.0 += s;
            acc.1 += n;
        }
    }
    let mut crps_by_model: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for ((name, _), (s, n)) in totals {
        crps_by_model.entry(name).or_default().push(s / n.max(1) as f64);
    }
    Ok(OrderingRun {
        crps: crps_by_model,
        mpiw: widths.iter().map(|(s, n)| s / (*n).max(1) as f64).collect(),
        n_issues: issues.len(),
    })
}

fn nowcaster_ordering(run: &OrderingRun, took: Elapsed) -> Outcome {
    if took > Elapsed::from_secs(600) {
        return Err(format!("took {took:.1?}, limit 600s"));
    }
    // Leads of 30 min and more are lead indices 2..=8.
    let mean = |name: &str| {
        let v = &run.crps[name][1..];
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (p, s, pa) = (mean("persistence"), mean("solarsteps"), mean("solarsteps-pa"));
    check(
        s < p && pa < p,
        format!(
            "{} issue times; mean CRPS at leads >= 30 min: persistence {p:.4}, solarsteps {s:.4}, solarsteps-pa {pa:.4}",
            run.n_issues
        ),
    )
}

fn ensemble_behaviour(run: &OrderingRun) -> Outcome {
    let growing = run.mpiw.windows(2).all(|w| w[1] >= w[0]);
    let world = advecting_world();
    let step = Duration::minutes(15);
    let issue = Utc.with_ymd_and_hms(2021, 5, 23, 10, 0, 0).unwrap();
    let inputs: Vec<GridField> = (0..4).rev().map(|k| world.csi_field(issue - step * k)).collect();
    let seq = FieldSequence::with_step(inputs, step).map_err(|e| e.to_string())?;
    let quiet = NowcastConfig { noise_scale: 0.0, seed: 9, ..Default::default() };
    let bytes = |f: &ForecastSet| -> Vec<Vec<u8>> {
        (1..=f.n_leads()).flat_map(|l| f.lead(l).iter().map(|m| m.to_bytes())).collect()
    };
    let a = solarsteps_forecast(&seq, &quiet).map_err(|e| e.to_string())?;
    let b = solarsteps_forecast(&seq, &quiet).map_err(|e| e.to_string())?;
    let identical = bytes(&a) == bytes(&b);
    let widths: Vec<String> = run.mpiw.iter().map(|w| format!("{w:.3}")).collect();
    check(growing && identical, format!("MPIW by lead [{}]; noise-free rerun identical: {identical}", widths.join(", ")))
}

fn pipeline_config(root: &Path) -> RunConfig {
    let mut c = RunConfig { seed: 8, ..Default::default() };
    c.paths.grids_dir = root.join("grids");
    c.paths.registry = root.join("stations.csv");
    c.paths.series_dir = root.join("series");
    c.paths.output_dir = root.join("out");
    // The synthetic fleet is clean by construction and spans one year only.
    c.power.cleaning = CleaningMode::Off;
    c
}

fn end_to_end(root: &Path) -> Outcome {
    let start = Instant::now();
    let c = pipeline_config(root);
    let fail = |e: pvcast_cli::CliError| e.to_string();
    let manifest: SynthManifest = synth::run(&c).map_err(fail)?;
    if manifest.stations.len() != 50 || manifest.spec.n_days != 60 {
        return Err("synthetic fleet is not 50 stations over 60 days".into());
    }
    let trained = power::train(&c).map_err(fail)?;
    let nrmse = trained.mean_test_nrmse().ok_or("no test samples")?;
    let mut detail = vec![format!("{} models, fleet-mean test nRMSE {:.2}%", trained.report.len(), 100.0 * nrmse)];
    let mut ok = nrmse < 0.03 && trained.report.len() == 50;

    let regimes: BTreeMap<_, _> = manifest.day_regimes.iter().copied().collect();
    for (model, only_static) in [(ModelKind::Observed, false), (ModelKind::Persistence, true)] {
        nowcast::run(&c, model, &[]).map_err(fail)?;
        power::predict(&c, model).map_err(fail)?;
        let report = aggregate::run(&c, model).map_err(fail)?.report;
        let days: Vec<f64> = report
            .days
            .iter()
            .filter(|d| !only_static || regimes.get(&d.date) == Some(&Regime::Static))
            .map(|d| d.relative_error)
            .collect();
        let below = days.iter().filter(|&&e| e < 0.01).count();
        let worst = days.iter().cloned().fold(0.0, f64::max);
        ok &= !days.is_empty() && below == days.len();
        let scope = if only_static { "static days" } else { "days" };
        detail.push(format!("{}: {below}/{} {scope} < 1% (worst {:.3}%)", model.name(), days.len(), 100.0 * worst));
    }
    within(Elapsed::from_secs(900), start)?;
    check(ok, detail.join("; "))
}

fn small_config(root: &Path, n_days: usize) -> RunConfig {
    let mut c = pipeline_config(root);
    c.synth.n_days = n_days;
    c.synth.n_stations = 6;
    c
}

fn workflow(root: &Path) -> Outcome {
    let mut c = small_config(root, 1);
    c.nowcast.n_members = 10;
    synth::run(&c).map_err(|e| e.to_string())?;
    let at = |h: u32| Utc.with_ymd_and_hms(2021, 5, 22, h, 0, 0).unwrap();
    let requested = [at(2), at(4), at(8), at(11), at(14), at(17), at(20)];
    let s = nowcast::run(&c, ModelKind::Solarsteps, &requested).map_err(|e| e.to_string())?;
    let layout = OutputLayout::new(&c.paths.output_dir);
    let mut counts = Vec::new();
    for &t in &s.written {
        let dir = layout.forecast(ModelKind::Solarsteps, t);
        let f = ForecastSet::read_dir(&dir).map_err(|e| e.to_string())?;
        let files = std::fs::read_dir(&dir)
            .map_err(|e| e.to_string())?
            .filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "sgf")))
            .count();
        counts.push((f.n_leads(), f.n_members(), files));
    }
    let skipped: Vec<DateTime<Utc>> = s.skipped.iter().map(|(t, _)| *t).collect();
    let (lon, lat) = c.synth.geometry().map_err(|e| e.to_string())?.center();
    let expect_skipped: Vec<DateTime<Utc>> =
        requested.iter().copied().filter(|&t| issue_rejection(lat, lon, t, 1.0, 3.0).is_some()).collect();
    check(
        !s.written.is_empty()
            && counts.iter().all(|&c| c == (8, 10, 80))
            && skipped == expect_skipped
            && skipped.contains(&at(2))
            && skipped.contains(&at(17)),
        format!("{} issue time(s) with (leads, members, files) {counts:?}; skipped {}", s.written.len(), skipped.len()),
    )
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn full_small_pipeline(root: &Path) -> Result<(), String> {
    let mut c = small_config(root, 14);
    c.evaluate.models = vec![ModelKind::Solarsteps, ModelKind::SolarstepsPa];
    let fail = |e: pvcast_cli::CliError| e.to_string();
    synth::run(&c).map_err(fail)?;
    let issues: Vec<DateTime<Utc>> =
        (0..3).map(|d| Utc.with_ymd_and_hms(2021, 5, 22, 10, 0, 0).unwrap() + Duration::days(d)).collect();
    for model in [ModelKind::Solarsteps, ModelKind::SolarstepsPa] {
        nowcast::run(&c, model, &issues).map_err(fail)?;
    }
    power::train(&c).map_err(fail)?;
    for model in [ModelKind::Solarsteps, ModelKind::SolarstepsPa] {
        power::predict(&c, model).map_err(fail)?;
        aggregate::run(&c, model).map_err(fail)?;
    }
    evaluate::run(&c).map_err(fail)?;
    Ok(())
}

fn bit_exact_io(root: &Path) -> Outcome {
    let g = GridGeometry::new(7.5, 45.5, 0.02, 37, 23).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut grids_ok = true;
    for k in 0..20 {
        let values = (0..g.len())
            .map(|_| if rng.random_bool(0.1) { f32::NAN } else { rng.random_range(-1e3f32..1e3) })
            .collect();
        let f = GridField::new(g, t0() + Duration::minutes(15 * k), FieldKind::Ssi, values).unwrap();
        let path = root.join(format!("grid{k}.sgf"));
        write_grid(&path, &f).map_err(|e| e.to_string())?;
        let back = read_grid(&path).map_err(|e| e.to_string())?;
        let again = root.join(format!("grid{k}b.sgf"));
        write_grid(&again, &back).map_err(|e| e.to_string())?;
        grids_ok &= back.to_bytes() == f.to_bytes()
            && std::fs::read(&path).unwrap() == std::fs::read(&again).unwrap()
            && back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits());
    }

    let (a, b) = (root.join("run_a"), root.join("run_b"));
    full_small_pipeline(&a)?;
    full_small_pipeline(&b)?;
    let (fa, fb) = (collect_files(&a), collect_files(&b));
    let differing: Vec<&PathBuf> = fa.iter().filter(|(p, bytes)| fb.get(*p) != Some(bytes)).map(|(p, _)| p).collect();
    let same_listing = fa.keys().eq(fb.keys());
    check(
        grids_ok && same_listing && differing.is_empty(),
        format!(
            "SGF1 round trip exact: {grids_ok}; rerun compared {} files, {} differ{}",
            fa.len(),
            differing.len(),
            differing.first().map(|p| format!(" (first: {})", p.display())).unwrap_or_default()
        ),
    )
}

fn report(n: usize, name: &str, outcome: std::thread::Result<Outcome>, took: Elapsed) -> bool {
    let (ok, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!("criterion {n}: {} - {name}: {detail} [{took:.1?}]", if ok { "PASS" } else { "FAIL" });
    ok
}

fn timed<T>(f: impl FnOnce() -> T) -> (std::thread::Result<T>, Elapsed) {
    let start = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f));
    (r, start.elapsed())
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let mut passed = Vec::new();

    let simple: [(usize, &str, fn() -> Outcome); 5] = [
        (1, "closed-form CRPS matches integration", metric_oracle),
        (2, "single-member CRPS equals MAE", deterministic_reduction),
        (3, "calibrated ensemble rank histogram and coverage", calibration),
        (4, "cascade round trip and AR(2) refit", cascade_round_trip),
        (5, "optical-flow recovery and advection", flow_recovery),
    ];
    for (n, name, f) in simple {
        let (r, took) = timed(f);
        passed.push(report(n, name, r, took));
    }

    let (run, took) = timed(ordering_run);
    let run = match run {
        Ok(Ok(run)) => Some(run),
        Ok(Err(e)) => {
            passed.push(report(6, "nowcasters beat persistence", Ok(Err(e.clone())), took));
            passed.push(report(7, "ensemble spread and determinism", Ok(Err(e)), took));
            None
        }
        Err(p) => {
            passed.push(report(6, "nowcasters beat persistence", Err(p), took));
            passed.push(report(7, "ensemble spread and determinism", Ok(Err("ordering run panicked".into())), took));
            None
        }
    };
    if let Some(run) = run {
        let (r, _) = timed(|| nowcaster_ordering(&run, took));
        passed.push(report(6, "nowcasters beat persistence", r, took));
        let (r, t7) = timed(|| ensemble_behaviour(&run));
        passed.push(report(7, "ensemble spread and determinism", r, t7));
    }

    let dirs: Vec<PathBuf> = (8..=10).map(|n| scratch.path().join(format!("c{n}"))).collect();
    for d in &dirs {
        std::fs::create_dir_all(d).unwrap();
    }
    let (r, took) = timed(|| end_to_end(&dirs[0]));
    passed.push(report(8, "end-to-end synthetic pipeline", r, took));
    let (r, took) = timed(|| workflow(&dirs[1]));
    passed.push(report(9, "nowcast workflow conformance", r, took));
    let (r, took) = timed(|| bit_exact_io(&dirs[2]));
    passed.push(report(10, "bit-exact I/O and seeded reruns", r, took));

    let n_pass = passed.iter().filter(|&&p| p).count();
    println!("acceptance: {n_pass}/{} criteria passed", passed.len());
    if n_pass != passed.len() {
        std::process::exit(1);
    }
}
