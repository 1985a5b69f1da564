//! Deterministic synthetic weather, stations and power measurements.
//!
//! Cloud fields are sums of Gaussian blobs on a periodic plane twice the
//! domain size. The regime of each day is taken cyclically from the spec.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pvcast::clearsky::{clearsky_field, csi_to_ssi, solar_position, ClearSkyParams, CsiConversion};
use pvcast::grid::{interpolate_point, FieldKind, GridField, GridGeometry};
use pvcast::power::{series_file_name, write_registry, PowerSeries, StationInfo};
use pvcast::rng::{keyed_rng, Stream};

use crate::error::{CliError, CliResult};
use crate::store::GridStore;

pub const STEP_MINUTES: i64 = 15;
pub const STEPS_PER_DAY: usize = 96;
pub const MANIFEST_FILE: &str = "synth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// CSI = 1 everywhere.
    Clear,
    /// Clouds frozen in place for the whole day.
    Static,
    /// Clouds translating at the spec velocity.
    Advecting,
    /// Stationary cells that grow and decay.
    Convective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub start: NaiveDate,
    pub n_days: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub lon_min: f64,
    pub lat_min: f64,
    pub cell_size: f64,
    /// Day `d` has regime `regimes[d % len]`.
    pub regimes: Vec<Regime>,
    /// Cloud motion of the advecting regime, pixels per step (east, north).
    pub velocity: [f64; 2],
    pub n_blobs: usize,
    /// CSI reduction at a saturated cloud core.
    pub cloud_depth: f64,
    pub n_stations: usize,
    pub capacity_kw: [f64; 2],
    /// Power = capacity · clip(gain · csi · cos(sza), 0, 1) + noise.
    pub gain: f64,
    /// Noise standard deviation as a fraction of capacity.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2021, 5, 22).unwrap(),
            n_days: 60,
            n_rows: 64,
            n_cols: 64,
            lon_min: 8.0,
            lat_min: 46.0,
            cell_size: 0.02,
            regimes: vec![Regime::Advecting, Regime::Convective, Regime::Clear, Regime::Static],
            velocity: [2.4, -1.8],
            n_blobs: 24,
            cloud_depth: 0.75,
            n_stations: 50,
            capacity_kw: [5.0, 200.0],
            gain: 1.4,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(format!("synth: {m}")));
        if self.n_days == 0 || self.n_rows < 8 || self.n_cols < 8 {
            return bad("need >= 1 day and a grid of at least 8x8");
        }
        if self.regimes.is_empty() {
            return bad("regimes must not be empty");
        }
        if !(self.cell_size > 0.0) || !(self.gain > 0.0) || !(self.noise_std >= 0.0) {
            return bad("cell_size and gain must be > 0, noise_std >= 0");
        }
        if !(0.0 < self.capacity_kw[0] && self.capacity_kw[0] <= self.capacity_kw[1]) {
            return bad("capacity range must be positive and ordered");
        }
        if !(0.0..=1.0).contains(&self.cloud_depth) {
            return bad("cloud_depth must be in [0, 1]");
        }
        Ok(())
    }

    pub fn geometry(&self) -> CliResult<GridGeometry> {
        Ok(GridGeometry::new(self.lon_min, self.lat_min, self.cell_size, self.n_cols, self.n_rows)?)
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.n_days as i64 - 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    sigma: f64,
    amp: f64,
    /// Convective life cycle in steps since midnight.
    birth: f64,
    life: f64,
}

#[derive(Debug, Clone)]
struct DayWeather {
    regime: Regime,
    blobs: Vec<Blob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStation {
    #[serde(flatten)]
    pub info: StationInfo,
    pub capacity_kw: f64,
}

/// The generator behind a spec; fields can be evaluated at any instant of the record.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub spec: SyntheticSpec,
    pub geometry: GridGeometry,
    pub clear_sky: ClearSkyParams,
    days: Vec<DayWeather>,
    stations: Vec<SyntheticStation>,
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).unwrap())
}

impl SyntheticWorld {
    pub fn new(spec: &SyntheticSpec, clear_sky: ClearSkyParams) -> CliResult<Self> {
        spec.validate()?;
        let geometry = spec.geometry()?;
        let days = (0..spec.n_days).map(|d| Self::day_weather(spec, d)).collect();
        let stations = Self::place_stations(spec, &geometry);
        Ok(Self { spec: spec.clone(), geometry, clear_sky, days, stations })
    }

    fn day_weather(spec: &SyntheticSpec, day: usize) -> DayWeather {
        let regime = spec.regimes[day % spec.regimes.len()];
        let mut rng = keyed_rng(spec.seed, Stream::Synthetic, &[1, day as u64]);
        let (px, py) = (2.0 * spec.n_cols as f64, 2.0 * spec.n_rows as f64);
        let scale = (spec.n_rows.min(spec.n_cols) as f64 / 64.0).max(0.5);
        let blobs = (0..spec.n_blobs)
            .map(|_| Blob {
                x: rng.random_range(0.0..px),
                y: rng.random_range(0.0..py),
                sigma: rng.random_range(3.0..8.0) * scale,
                amp: rng.random_range(0.6..1.2),
                birth: rng.random_range(0.0..STEPS_PER_DAY as f64),
                life: rng.random_range(16.0..40.0),
            })
            .collect();
        DayWeather { regime, blobs }
    }

    fn place_stations(spec: &SyntheticSpec, g: &GridGeometry) -> Vec<SyntheticStation> {
        let mut rng = keyed_rng(spec.seed, Stream::Synthetic, &[0]);
        let (lo, hi) = (spec.capacity_kw[0].ln(), spec.capacity_kw[1].ln());
        (0..spec.n_stations)
            .map(|k| {
                let x = rng.random_range(2.0..(g.n_cols as f64 - 3.0));
                let y = rng.random_range(2.0..(g.n_rows as f64 - 3.0));
                let capacity = if hi > lo { rng.random_range(lo..hi).exp() } else { spec.capacity_kw[0] };
                SyntheticStation {
                    info: StationInfo {
                        id: format!("S{k:03}"),
                        lon: g.lon_min + (x + 0.5) * g.cell_size,
                        lat: g.lat_min + (y + 0.5) * g.cell_size,
                        elevation_m: rng.random_range(250.0..1500.0f64).round(),
                    },
                    capacity_kw: capacity,
                }
            })
            .collect()
    }

    pub fn stations(&self) -> &[SyntheticStation] {
        &self.stations
    }

    fn day_index(&self, t: DateTime<Utc>) -> Option<usize> {
        let d = (t.date_naive() - self.spec.start).num_days();
        (0..self.spec.n_days as i64).contains(&d).then_some(d as usize)
    }

    pub fn regime(&self, date: NaiveDate) -> Option<Regime> {
        self.day_index(midnight(date)).map(|d| self.days[d].regime)
    }

    pub fn day_regimes(&self) -> Vec<(NaiveDate, Regime)> {
        self.days.iter().enumerate().map(|(d, w)| (self.spec.start + Duration::days(d as i64), w.regime)).collect()
    }

    /// All 15-min instants of the record.
    pub fn instants(&self) -> Vec<DateTime<Utc>> {
        let t0 = midnight(self.spec.start);
        (0..self.spec.n_days * STEPS_PER_DAY).map(|k| t0 + Duration::minutes(STEP_MINUTES * k as i64)).collect()
    }

    /// Whether the sun is up at any corner of the domain.
    pub fn is_lit(&self, t: DateTime<Utc>) -> bool {
        let g = &self.geometry;
        let lons = [g.lon_min, g.lon_min + g.n_cols as f64 * g.cell_size];
        let lats = [g.lat_min, g.lat_min + g.n_rows as f64 * g.cell_size];
        lons.iter().any(|&lon| lats.iter().any(|&lat| solar_position(lat, lon, t).elevation > 0.0))
    }

    /// CSI at fractional pixel position `(x, y)` (column, row).
    pub fn csi_at(&self, x: f64, y: f64, t: DateTime<Utc>) -> f64 {
        let Some(d) = self.day_index(t) else {
            return f64::NAN;
        };
        let day = &self.days[d];
        let k = (t - midnight(t.date_naive())).num_seconds() as f64 / (60 * STEP_MINUTES) as f64;
        let (px, py) = (2.0 * self.spec.n_cols as f64, 2.0 * self.spec.n_rows as f64);
        let (sx, sy) = match day.regime {
            Regime::Clear => return 1.0,
            Regime::Advecting => (x - self.spec.velocity[0] * k, y - self.spec.velocity[1] * k),
            Regime::Static | Regime::Convective => (x, y),
        };
        let wrap = |d: f64, p: f64| {
            let d = d.rem_euclid(p);
            if d > p / 2.0 { d - p } else { d }
        };
        let mut cloud = 0.0;
        for b in &day.blobs {
            let envelope = if day.regime == Regime::Convective {
                let phase = (k - b.birth) / b.life;
                if (0.0..=1.0).contains(&phase) { (std::f64::consts::PI * phase).sin() } else { continue }
            } else {
                1.0
            };
            let (dx, dy) = (wrap(sx - b.x, px), wrap(sy - b.y, py));
            let r2 = (dx * dx + dy * dy) / (b.sigma * b.sigma);
            if r2 < 25.0 {
                cloud += b.amp * envelope * (-0.5 * r2).exp();
            }
        }
        // Fine texture moving with the clouds.
        let texture = 0.85 + 0.15 * (0.5 + 0.5 * ((0.9 * sx).sin() * (0.7 * sy + 0.3 * sx).cos()));
        1.0 - self.spec.cloud_depth * (cloud * texture).min(1.0)
    }

    pub fn csi_field(&self, t: DateTime<Utc>) -> GridField {
        let g = self.geometry;
        let values = (0..g.len())
            .map(|p| self.csi_at((p % g.n_cols) as f64, (p / g.n_cols) as f64, t) as f32)
            .collect();
        GridField { geometry: g, timestamp: t, kind: FieldKind::Csi, values }
    }

    pub fn ssi_field(&self, csi: &GridField) -> CliResult<GridField> {
        let clear = clearsky_field(&self.geometry, csi.timestamp, &self.clear_sky);
        Ok(csi_to_ssi(csi, &clear, &CsiConversion::default())?)
    }

    /// Ground-truth power of a station from the CSI grid.
    fn power(&self, station: &SyntheticStation, csi: Option<&GridField>, t: DateTime<Utc>, noise: f64) -> f64 {
        let info = &station.info;
        let cos_z = solar_position(info.lat, info.lon, t).zenith.to_radians().cos();
        if cos_z <= 0.0 {
            return 0.0;
        }
        let Some(k) = csi.and_then(|f| interpolate_point(f, info.lon, info.lat).ok().flatten()) else {
            return 0.0;
        };
        let p = station.capacity_kw * (self.spec.gain * k * cos_z).clamp(0.0, 1.0);
        (p + self.spec.noise_std * station.capacity_kw * noise).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SyntheticSpec,
    pub linke_turbidity: f64,
    pub n_grid_instants: usize,
    pub stations: Vec<SyntheticStation>,
    pub day_regimes: Vec<(NaiveDate, Regime)>,
}

impl SynthManifest {
    pub fn load(grids_dir: &Path) -> CliResult<Self> {
        let path = grids_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes SSI and CSI grids for every lit instant, the station registry and
/// one power series per station.
pub fn write_dataset(
    world: &SyntheticWorld,
    linke_turbidity: f64,
    grids_dir: &Path,
    registry: &Path,
    series_dir: &Path,
) -> CliResult<SynthManifest> {
    let store = GridStore::new(grids_dir);
    store.create()?;
    for dir in [Some(series_dir), registry.parent()].into_iter().flatten() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let instants = world.instants();
    let n_st = world.stations.len();
    // Per day: power of every station at every instant, plus the number of grids written.
    let days: Vec<(Vec<Vec<f64>>, usize)> = (0..world.spec.n_days)
        .into_par_iter()
        .map(|d| -> CliResult<_> {
            let mut rngs: Vec<_> = (0..n_st)
                .map(|s| keyed_rng(world.spec.seed, Stream::Synthetic, &[2, s as u64, d as u64]))
                .collect();
            let mut power = vec![Vec::with_capacity(STEPS_PER_DAY); n_st];
            let mut written = 0;
            for &t in &instants[d * STEPS_PER_DAY..(d + 1) * STEPS_PER_DAY] {
                let csi = world.is_lit(t).then(|| world.csi_field(t));
                if let Some(csi) = &csi {
                    store.write(csi)?;
                    store.write(&world.ssi_field(csi)?)?;
                    written += 1;
                }
                for (s, station) in world.stations.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rngs[s]);
                    power[s].push(world.power(station, csi.as_ref(), t, z));
                }
            }
            Ok((power, written))
        })
        .collect::<CliResult<_>>()?;

    let infos: Vec<StationInfo> = world.stations.iter().map(|s| s.info.clone()).collect();
    write_registry(registry, &infos)?;
    for (s, info) in infos.iter().enumerate() {
        let values = days.iter().flat_map(|(p, _)| p[s].iter().copied()).collect();
        let series = PowerSeries::new(instants.clone(), values)?;
        series.write_csv(series_dir.join(series_file_name(&info.id)))?;
    }
    let manifest = SynthManifest {
        spec: world.spec.clone(),
        linke_turbidity,
        n_grid_instants: days.iter().map(|(_, n)| n).sum(),
        stations: world.stations.clone(),
        day_regimes: world.day_regimes(),
    };
    let path = grids_dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(regimes: Vec<Regime>) -> SyntheticWorld {
        let spec = SyntheticSpec { n_days: 2, n_stations: 3, regimes, ..Default::default() };
        SyntheticWorld::new(&spec, ClearSkyParams::constant(3.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn clear_days_are_clear() {
        let w = world(vec![Regime::Clear]);
        let t = Utc.with_ymd_and_hms(2021, 5, 22, 11, 0, 0).unwrap();
        assert!(w.csi_field(t).values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn static_days_do_not_change() {
        let w = world(vec![Regime::Static]);
        let t = Utc.with_ymd_and_hms(2021, 5, 22, 9, 0, 0).unwrap();
        assert_eq!(w.csi_field(t).values, w.csi_field(t + Duration::hours(3)).values);
    }

    #[test]
    fn advection_shifts_pattern() {
        let w = world(vec![Regime::Advecting]);
        let t = Utc.with_ymd_and_hms(2021, 5, 22, 9, 0, 0).unwrap();
        let later = t + Duration::minutes(15);
        let [u, v] = w.spec.velocity;
        for (x, y) in [(10.0, 20.0), (33.3, 4.5)] {
            assert!((w.csi_at(x, y, t) - w.csi_at(x + u, y + v, later)).abs() < 1e-12);
        }
    }
}
