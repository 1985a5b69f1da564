//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use pvcast::cascade::NowcastConfig;
use pvcast::clearsky::CsiConversion;
use pvcast::flow::PerturbationParams;
use pvcast::power::{CleaningMode, GbrtParams, DEFAULT_TOLERANCE};
use pvcast::verify::{DEFAULT_ALPHA, DEFAULT_ELEVATION_SPLIT};

use crate::error::{CliError, CliResult};
use crate::synth::SyntheticSpec;

/// Environment variable overriding `paths.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PVCAST_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Persistence,
    Solarsteps,
    SolarstepsPa,
    /// Observed fields at the valid times, used as a perfect forecast.
    Observed,
    /// Forecasts supplied under `forecasts/external/`.
    External,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Persistence => "persistence",
            ModelKind::Solarsteps => "solarsteps",
            ModelKind::SolarstepsPa => "solarsteps-pa",
            ModelKind::Observed => "observed",
            ModelKind::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub grids_dir: PathBuf,
    pub registry: PathBuf,
    pub series_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            grids_dir: "data/grids".into(),
            registry: "data/stations.csv".into(),
            series_dir: "data/series".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Explicit issue times; empty means every full hour of the record.
    pub issue_times: Vec<DateTime<Utc>>,
    /// Hours after sunrise before the first issue time.
    pub after_sunrise_h: f64,
    /// Hours before sunset after the last issue time.
    pub before_sunset_h: f64,
    pub n_inputs: usize,
    /// Identical members written by the `observed` model.
    pub observed_members: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { issue_times: Vec::new(), after_sunrise_h: 1.0, before_sunset_h: 3.0, n_inputs: 4, observed_members: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub cleaning: CleaningMode,
    pub tolerance: f64,
    pub gbrt: GbrtParams,
    pub search_trials: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { cleaning: CleaningMode::CalendarYear, tolerance: DEFAULT_TOLERANCE, gbrt: GbrtParams::default(), search_trials: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Block-averaging factor applied to gridded SSI before scoring.
    pub downsample: usize,
    pub elevation_split_m: f64,
    /// Use the median station elevation instead of `elevation_split_m`.
    pub elevation_split_from_data: bool,
    pub models: Vec<ModelKind>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            downsample: 4,
            elevation_split_m: DEFAULT_ELEVATION_SPLIT,
            elevation_split_from_data: false,
            models: vec![ModelKind::Persistence, ModelKind::Solarsteps, ModelKind::SolarstepsPa],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    /// 0 uses every logical CPU.
    pub workers: usize,
    pub model: ModelKind,
    pub linke_turbidity: f64,
    pub paths: Paths,
    pub conversion: CsiConversion,
    pub nowcast: NowcastConfig,
    pub perturbation: PerturbationParams,
    pub schedule: ScheduleConfig,
    pub power: PowerConfig,
    pub evaluate: EvaluateConfig,
    pub synth: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha: DEFAULT_ALPHA,
            workers: 0,
            model: ModelKind::Solarsteps,
            linke_turbidity: pvcast::clearsky::DEFAULT_LINKE_TURBIDITY,
            paths: Paths::default(),
            conversion: CsiConversion::default(),
            nowcast: NowcastConfig::default(),
            perturbation: PerturbationParams::default(),
            schedule: ScheduleConfig::default(),
            power: PowerConfig::default(),
            evaluate: EvaluateConfig::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

impl RunConfig {
    /// Parses `path`; relative paths inside are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|source| CliError::Toml { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.paths.resolve(base);
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> CliResult<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| CliError::io(path, e))
    }

    /// Applies the output-directory environment override.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.paths.output_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        self.nowcast.validate()?;
        self.perturbation.validate()?;
        self.power.gbrt.validate()?;
        if self.schedule.n_inputs < 2 {
            return Err(CliError::Config("schedule.n_inputs must be >= 2".into()));
        }
        if self.schedule.observed_members == 0 {
            return Err(CliError::Config("schedule.observed_members must be >= 1".into()));
        }
        if self.evaluate.downsample == 0 {
            return Err(CliError::Config("evaluate.downsample must be >= 1".into()));
        }
        self.synth.validate()
    }

    pub fn clear_sky(&self) -> CliResult<pvcast::clearsky::ClearSkyParams> {
        Ok(pvcast::clearsky::ClearSkyParams::constant(self.linke_turbidity, 0.0)?)
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.grids_dir, &mut self.registry, &mut self.series_dir, &mut self.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Fails on the first path in `required` that does not exist.
    pub fn require(required: &[&Path]) -> CliResult<()> {
        match required.iter().find(|p| !p.exists()) {
            Some(p) => Err(CliError::MissingPath(p.to_path_buf())),
            None => Ok(()),
        }
    }
}

impl RunConfig {
    /// Nowcast parameters carrying the run seed.
    pub fn nowcast_params(&self) -> NowcastConfig {
        NowcastConfig { seed: self.seed, ..self.nowcast }
    }

    pub fn perturbation_params(&self) -> PerturbationParams {
        PerturbationParams { seed: self.seed, ..self.perturbation }
    }

    pub fn synth_spec(&self) -> SyntheticSpec {
        SyntheticSpec { seed: self.seed, ..self.synth.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig { seed: 42, alpha: 0.2, model: ModelKind::SolarstepsPa, ..Default::default() };
        c.schedule.issue_times = vec!["2021-06-01T10:00:00Z".parse().unwrap()];
        c.power.cleaning = pvcast::power::CleaningMode::Halves;
        c.nowcast.csi_clip = [0.05, 1.3];
        let text = c.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\n[paths]\noutput_dir = \"results\"\n").unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.paths.output_dir, dir.path().join("results"));
        assert_eq!(c.paths.grids_dir, dir.path().join("data/grids"));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "sede = 3\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Toml { .. })));
        std::fs::write(&path, "alpha = 1.5\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
    }

    #[test]
    fn seed_reaches_stochastic_parts() {
        let c = RunConfig { seed: 11, ..Default::default() };
        assert_eq!(c.nowcast_params().seed, 11);
        assert_eq!(c.perturbation_params().seed, 11);
        assert_eq!(c.synth_spec().seed, 11);
    }

    #[test]
    fn missing_path_reported() {
        let err = Paths::require(&[Path::new("/nonexistent/pvcast")]).unwrap_err();
        assert!(matches!(err, CliError::MissingPath(_)));
    }
}
