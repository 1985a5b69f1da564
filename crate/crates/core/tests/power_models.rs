use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;
use pvcast::clearsky::solar_position;
use pvcast::forecast::ForecastSet;
use pvcast::grid::{FieldKind, GridField, GridGeometry};
use pvcast::power::{
    build_features, day_of_year, fleet_total, predict_power, split_nrmse, station_samples, train_station_model,
    PowerSeries, Split, SplitPlan, SsiSeries, Station, StationInfo, TrainingOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LON: f64 = 8.5;
const LAT: f64 = 46.5;

fn info() -> StationInfo {
    StationInfo { id: "st1".into(), lon: LON, lat: LAT, elevation_m: 600.0 }
}

fn timestamps(days: i64) -> Vec<DateTime<Utc>> {
    let t0 = Utc.with_ymd_and_hms(2021, 5, 1, 0, 0, 0).unwrap();
    (0..days * 96).map(|k| t0 + Duration::minutes(15 * k)).collect()
}

/// A cosine-of-zenith envelope times a clear-sky index: every other day is
/// clear, the rest have a random index in [0.2, 1).
fn irradiance(ts: &[DateTime<Utc>], seed: u64) -> SsiSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = ts[0];
    ts.iter()
        .map(|&t| {
            let cz = solar_position(LAT, LON, t).zenith.to_radians().cos().max(0.0);
            let clear = (t - t0).num_days() % 2 == 0;
            let csi = if clear { 1.0 } else { rng.random_range(0.2..1.0) };
            (t, 1000.0 * cz * csi)
        })
        .collect()
}

fn station_with(ts: &[DateTime<Utc>], ssi: &SsiSeries, power: impl Fn(DateTime<Utc>, f64) -> f64) -> Station {
    let values = ts.iter().map(|t| power(*t, ssi[t])).collect();
    Station::new(info(), PowerSeries::new(ts.to_vec(), values).unwrap()).unwrap()
}

fn plan(ts: &[DateTime<Utc>]) -> SplitPlan {
    SplitPlan::covering(ts.iter().map(|t| t.date_naive())).unwrap()
}

#[test]
fn linear_power_curve_is_recovered() {
    let ts = timestamps(48);
    let ssi = irradiance(&ts, 1);
    let max_ssi = ssi.values().cloned().fold(0.0, f64::max);
    let station = station_with(&ts, &ssi, |_, s| 0.9 * s / max_ssi);
    let plan = plan(&ts);
    let model = train_station_model(&station, &ssi, &plan, &TrainingOptions::default()).unwrap();
    let nrmse = split_nrmse(&model, &station, &ssi, &plan, Split::Test).unwrap();
    assert!(nrmse < 0.02, "test nRMSE {nrmse}");
}

#[test]
fn zenith_step_is_learned() {
    let ts = timestamps(48);
    let ssi = irradiance(&ts, 2);
    let station = station_with(&ts, &ssi, |t, _| {
        let z = solar_position(LAT, LON, t).zenith;
        if z >= 90.0 { 0.0 } else if z < 60.0 { 5.0 } else { 1.0 }
    });
    let plan = plan(&ts);
    let model = train_station_model(&station, &ssi, &plan, &TrainingOptions::default()).unwrap();
    let test = station_samples(&station, &ssi, &plan, Split::Test);
    let close = test.iter().filter(|(_, f, p)| ((model.predict_features(f) - p) / station.p95).abs() <= 0.05).count();
    assert!(close as f64 > 0.95 * test.len() as f64, "{close}/{}", test.len());
}

#[test]
fn constant_target_and_determinism() {
    let ts = timestamps(30);
    let ssi = irradiance(&ts, 3);
    let station = station_with(&ts, &ssi, |_, _| 2.5);
    let plan = plan(&ts);
    let a = train_station_model(&station, &ssi, &plan, &TrainingOptions::default()).unwrap();
    let b = train_station_model(&station, &ssi, &plan, &TrainingOptions::default()).unwrap();
    assert_eq!(a, b);
    for (_, f, _) in station_samples(&station, &ssi, &plan, Split::Test) {
        assert!((a.predict_features(&f) / station.p95 - 1.0).abs() < 1e-6);
    }
}

#[test]
fn search_retraining_is_reproducible() {
    let ts = timestamps(30);
    let ssi = irradiance(&ts, 4);
    let max_ssi = ssi.values().cloned().fold(0.0, f64::max);
    let station = station_with(&ts, &ssi, |_, s| (s / max_ssi).sqrt());
    let plan = plan(&ts);
    let opts = TrainingOptions { search_trials: 4, seed: 9, ..Default::default() };
    let a = train_station_model(&station, &ssi, &plan, &opts).unwrap();
    let b = train_station_model(&station, &ssi, &plan, &opts).unwrap();
    let test = station_samples(&station, &ssi, &plan, Split::Test);
    assert!(test.iter().all(|(_, f, _)| a.predict_features(f).to_bits() == b.predict_features(f).to_bits()));
}

#[test]
fn too_few_samples_rejected() {
    let ts = timestamps(1);
    let ssi = irradiance(&ts, 5);
    let station = station_with(&ts, &ssi, |_, s| s);
    assert!(train_station_model(&station, &ssi, &plan(&ts), &TrainingOptions::default()).is_err());
}

fn ssi_forecast(issue: DateTime<Utc>, members: &[f32], n_leads: usize) -> ForecastSet {
    let g = GridGeometry::new(LON - 0.1, LAT - 0.1, 0.02, 10, 10).unwrap();
    let fields = (1..=n_leads)
        .map(|l| {
            members
                .iter()
                .map(|&v| GridField::filled(g, issue + Duration::minutes(15 * l as i64), FieldKind::Ssi, v))
                .collect()
        })
        .collect();
    ForecastSet::new("test", issue, Duration::minutes(15), 0, fields).unwrap()
}

#[test]
fn forecast_prediction_rules() {
    let ts = timestamps(36);
    let ssi = irradiance(&ts, 6);
    let max_ssi = ssi.values().cloned().fold(0.0, f64::max);
    let station = station_with(&ts, &ssi, |_, s| 4.0 * s / max_ssi);
    let model = train_station_model(&station, &ssi, &plan(&ts), &TrainingOptions::default()).unwrap();

    let night = Utc.with_ymd_and_hms(2021, 6, 20, 22, 0, 0).unwrap();
    let p = predict_power(&model, &ssi_forecast(night, &[800.0, 900.0], 4), &station.info).unwrap();
    assert!(p.values.iter().flatten().all(|v| *v == Some(0.0)));

    let noon = Utc.with_ymd_and_hms(2021, 6, 20, 10, 0, 0).unwrap();
    let same = predict_power(&model, &ssi_forecast(noon, &[500.0, 500.0, 500.0], 8), &station.info).unwrap();
    for lead in &same.values {
        assert!(lead.iter().all(|v| *v == lead[0]));
    }

    // Members ordered by irradiance stay ordered in power on a monotone curve.
    let members: Vec<f32> = (0..12).map(|k| 60.0 * k as f32 + 100.0).collect();
    let ordered = predict_power(&model, &ssi_forecast(noon, &members, 8), &station.info).unwrap();
    for lead in &ordered.values {
        for w in lead.windows(2) {
            assert!(w[1].unwrap() >= w[0].unwrap(), "{lead:?}");
        }
        assert!(lead.iter().all(|v| (0.0..=model.p95).contains(&v.unwrap())));
    }

    let total = fleet_total(&[same.clone(), same.clone()], 1, 0);
    assert_eq!(total.n_included, 2);
    assert!((total.total_kw - 2.0 * same.values[0][0].unwrap()).abs() < 1e-12);
}

#[test]
fn one_year_shift_keeps_day_of_year_features() {
    for k in 0..365 {
        let t = Utc.with_ymd_and_hms(2021, 1, 1, 11, 0, 0).unwrap() + Duration::days(k);
        let a = build_features(LON, LAT, Some(100.0), t).unwrap();
        let b = build_features(LON, LAT, Some(100.0), t + Duration::days(365)).unwrap();
        assert!((a.doy().0 - b.doy().0).abs() <= 0.02 && (a.doy().1 - b.doy().1).abs() <= 0.02, "day {k}");
        assert!(day_of_year(t) < 366.0);
    }
}

proptest! {
    #[test]
    fn split_plan_partitions_dates(start_off in 0i64..2000, len in 1i64..400) {
        let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap() + Duration::days(start_off);
        let end = start + Duration::days(len - 1);
        let plan = SplitPlan::new(start, end);
        prop_assert_eq!(plan.assignment.len() as i64, len);
        let (tr, va, te) = (plan.count(Split::Train), plan.count(Split::Val), plan.count(Split::Test));
        prop_assert_eq!(tr + va + te, len as usize);
        let expected = len as f64 * 10.0 / 12.0;
        prop_assert!((tr as f64 - expected).abs() <= 12.0);
        // Every full block holds ten training days and one of each evaluation split.
        for block in 0..(len / 12) {
            let days: Vec<Split> = (0..12).map(|d| plan.get(start + Duration::days(block * 12 + d)).unwrap()).collect();
            prop_assert_eq!(days.iter().filter(|s| **s == Split::Train).count(), 10);
            prop_assert_eq!(days.iter().filter(|s| **s == Split::Val).count(), 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rescaled_prediction_stays_within_p95(ssi in -50.0f64..2000.0, hours in 0i64..(36 * 24)) {
        use std::sync::OnceLock;
        static MODEL: OnceLock<pvcast::power::StationModel> = OnceLock::new();
        let model = MODEL.get_or_init(|| {
            let ts = timestamps(36);
            let ssi = irradiance(&ts, 7);
            let station = station_with(&ts, &ssi, |_, s| 3.0 * s / 1000.0);
            train_station_model(&station, &ssi, &plan(&ts), &TrainingOptions::default()).unwrap()
        });
        let t = Utc.with_ymd_and_hms(2021, 5, 1, 0, 0, 0).unwrap() + Duration::hours(hours);
        let p = model.predict(&info(), Some(ssi), t).unwrap();
        prop_assert!((0.0..=1.0).contains(&(p / model.p95)));
    }
}
