//! Stratified score accumulation with compensated sums.
//!
//! Scores are first computed per unit (a station, or a pixel for gridded
//! fields) and then averaged over units without weighting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{crps, EnsembleSample};
use crate::error::{Error, Result};

pub const STRATUM_ALL: &str = "all";

/// Default split between low- and high-elevation stations, metres.
pub const DEFAULT_ELEVATION_SPLIT: f64 = 790.0;

/// `"elev_low"` at or below `split`, `"elev_high"` above.
pub fn elevation_band(elevation_m: f64, split: f64) -> &'static str {
    if elevation_m <= split {
        "elev_low"
    } else {
        "elev_high"
    }
}

/// Thirds of the daylight window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeOfDay {
    Morning,
    Midday,
    Afternoon,
}

impl TimeOfDay {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::Morning => "morning",
            TimeOfDay::Midday => "midday",
            TimeOfDay::Afternoon => "afternoon",
        }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Third of `[sunrise, sunset]` containing `t`; `None` outside daylight.
pub fn time_of_day(t: DateTime<Utc>, sunrise: DateTime<Utc>, sunset: DateTime<Utc>) -> Option<TimeOfDay> {
    if t < sunrise || t > sunset || sunset <= sunrise {
        return None;
    }
    let frac = (t - sunrise).num_milliseconds() as f64 / (sunset - sunrise).num_milliseconds() as f64;
    Some(if frac < 1.0 / 3.0 {
        TimeOfDay::Morning
    } else if frac < 2.0 / 3.0 {
        TimeOfDay::Midday
    } else {
        TimeOfDay::Afternoon
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

#[derive(Debug, Clone, Default)]
struct UnitSums {
    n: u64,
    abs: NeumaierSum,
    sq: NeumaierSum,
    bias: NeumaierSum,
    crps: NeumaierSum,
    n_interval: u64,
    covered: u64,
    width: NeumaierSum,
    norm_width: NeumaierSum,
}

impl UnitSums {
    fn merge(&mut self, o: &UnitSums) {
        self.n += o.n;
        self.abs.merge(&o.abs);
        self.sq.merge(&o.sq);
        self.bias.merge(&o.bias);
        self.crps.merge(&o.crps);
        self.n_interval += o.n_interval;
        self.covered += o.covered;
        self.width.merge(&o.width);
        self.norm_width.merge(&o.norm_width);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    model: String,
    lead_min: i64,
    stratum: String,
}

/// Folds samples into per-(model, lead, stratum, unit) sums. Accumulators
/// built on disjoint sample sets can be merged in any order.
#[derive(Debug, Clone)]
pub struct ScoreAccumulator {
    alpha: f64,
    cells: BTreeMap<CellKey, BTreeMap<u64, UnitSums>>,
}

impl ScoreAccumulator {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
        }
        Ok(Self { alpha, cells: BTreeMap::new() })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn add(&mut self, model: &str, lead_min: i64, stratum: &str, unit: u64, sample: &EnsembleSample) {
        let key = CellKey { model: model.to_string(), lead_min, stratum: stratum.to_string() };
        let sums = self.cells.entry(key).or_default().entry(unit).or_default();
        let err = sample.normalized_error();
        sums.n += 1;
        sums.abs.add(err.abs());
        sums.sq.add(err * err);
        sums.bias.add(err);
        sums.crps.add(crps(sample));
        if let Ok((lo, hi)) = sample.interval(self.alpha) {
            let y = sample.observation();
            sums.n_interval += 1;
            sums.covered += u64::from(lo <= y && y <= hi);
            sums.width.add(hi - lo);
            sums.norm_width.add((hi - lo) / sample.normalizer());
        }
    }

    /// Adds `sample` to every stratum in `strata`.
    pub fn add_strata(&mut self, model: &str, lead_min: i64, strata: &[&str], unit: u64, sample: &EnsembleSample) {
        for s in strata {
            self.add(model, lead_min, s, unit, sample);
        }
    }

    pub fn merge(&mut self, other: ScoreAccumulator) {
        for (key, units) in other.cells {
            let mine = self.cells.entry(key).or_default();
            for (unit, sums) in units {
                mine.entry(unit).or_default().merge(&sums);
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn finish(&self) -> ScoreTable {
        let cells = self
            .cells
            .iter()
            .map(|(key, units)| {
                let n_units = units.len() as f64;
                let mean_over = |f: &dyn Fn(&UnitSums) -> f64| units.values().map(f).collect::<NeumaierSum>().value() / n_units;
                let interval_units: Vec<&UnitSums> = units.values().filter(|u| u.n_interval > 0).collect();
                let mean_interval = |f: &dyn Fn(&UnitSums) -> f64| {
                    (!interval_units.is_empty()).then(|| {
                        interval_units.iter().map(|u| f(u)).collect::<NeumaierSum>().value() / interval_units.len() as f64
                    })
                };
                ScoreCell {
                    model: key.model.clone(),
                    lead_min: key.lead_min,
                    stratum: key.stratum.clone(),
                    nmae: mean_over(&|u| u.abs.value() / u.n as f64),
                    nrmse: mean_over(&|u| (u.sq.value() / u.n as f64).sqrt()),
                    nmbe: mean_over(&|u| u.bias.value() / u.n as f64),
                    ncrps: mean_over(&|u| u.crps.value() / u.n as f64),
                    picp: mean_interval(&|u| u.covered as f64 / u.n_interval as f64),
                    pinaw: mean_interval(&|u| u.norm_width.value() / u.n_interval as f64),
                    mpiw: mean_interval(&|u| u.width.value() / u.n_interval as f64),
                    n_samples: units.values().map(|u| u.n).sum(),
                    n_units: units.len(),
                }
            })
            .collect();
        ScoreTable { alpha: self.alpha, cells }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub model: String,
    pub lead_min: i64,
    pub stratum: String,
    pub nmae: f64,
    pub nrmse: f64,
    pub nmbe: f64,
    pub ncrps: f64,
    /// Interval scores are absent for single-member forecasts.
    pub picp: Option<f64>,
    pub pinaw: Option<f64>,
    pub mpiw: Option<f64>,
    pub n_samples: u64,
    pub n_units: usize,
}

impl ScoreCell {
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("nmae", self.nmae), ("nrmse", self.nrmse), ("nmbe", self.nmbe), ("ncrps", self.ncrps)];
        for (name, v) in [("picp", self.picp), ("pinaw", self.pinaw), ("mpiw", self.mpiw)] {
            if let Some(v) = v {
                out.push((name, v));
            }
        }
        out
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub alpha: f64,
    pub cells: Vec<ScoreCell>,
}

impl ScoreTable {
    pub fn get(&self, model: &str, lead_min: i64, stratum: &str) -> Option<&ScoreCell> {
        self.cells.iter().find(|c| c.model == model && c.lead_min == lead_min && c.stratum == stratum)
    }

    pub fn models(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.cells.iter().map(|c| c.model.as_str()).collect();
        m.dedup();
        m.sort_unstable();
        m.dedup();
        m
    }

    /// Long format: `model,lead_min,stratum,metric,value,n`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "lead_min", "stratum", "metric", "value", "n"])?;
        for c in &self.cells {
            for (name, value) in c.metrics() {
                w.write_record([
                    c.model.as_str(),
                    &c.lead_min.to_string(),
                    c.stratum.as_str(),
                    name,
                    &format!("{value}"),
                    &c.n_samples.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
