//! On-disk layout of grids, forecasts, models and reports.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};

use pvcast::grid::{read_grid, write_grid, FieldKind, GridField};

use crate::config::ModelKind;
use crate::error::{CliError, CliResult};

const STAMP_FORMAT: &str = "%Y%m%dT%H%M";

pub fn stamp(t: DateTime<Utc>) -> String {
    t.format(STAMP_FORMAT).to_string()
}

pub fn parse_stamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, STAMP_FORMAT).ok().map(|n| Utc.from_utc_datetime(&n))
}

fn kind_dir(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::Ssi => "ssi",
        FieldKind::Csi => "csi",
        FieldKind::Power => "power",
        FieldKind::FlowU => "flow_u",
        FieldKind::FlowV => "flow_v",
    }
}

/// Sorted stamps of the entries in `dir` named `<stamp><suffix>`.
fn list_stamped(dir: &Path, suffix: &str) -> CliResult<Vec<DateTime<Utc>>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<DateTime<Utc>> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            parse_stamp(name.strip_suffix(suffix)?)
        })
        .collect();
    out.sort();
    Ok(out)
}

/// `<root>/<kind>/<stamp>.sgf`.
#[derive(Debug, Clone)]
pub struct GridStore {
    root: PathBuf,
}

impl GridStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> CliResult<()> {
        for kind in [FieldKind::Ssi, FieldKind::Csi] {
            let dir = self.root.join(kind_dir(kind));
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        Ok(())
    }

    pub fn path(&self, kind: FieldKind, t: DateTime<Utc>) -> PathBuf {
        self.root.join(kind_dir(kind)).join(format!("{}.sgf", stamp(t)))
    }

    pub fn write(&self, field: &GridField) -> CliResult<()> {
        Ok(write_grid(self.path(field.kind, field.timestamp), field)?)
    }

    /// `None` when the file does not exist.
    pub fn read(&self, kind: FieldKind, t: DateTime<Utc>) -> CliResult<Option<GridField>> {
        let path = self.path(kind, t);
        if !path.exists() {
            return Ok(None);
        }
        let field = read_grid(&path)?;
        if field.timestamp != t || field.kind != kind {
            return Err(CliError::Core(pvcast::Error::Format(format!(
                "{} holds {:?} at {}",
                path.display(),
                field.kind,
                field.timestamp
            ))));
        }
        Ok(Some(field))
    }

    pub fn timestamps(&self, kind: FieldKind) -> CliResult<Vec<DateTime<Utc>>> {
        list_stamped(&self.root.join(kind_dir(kind)), ".sgf")
    }
}

/// Directories under the output root.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn forecasts(&self, model: ModelKind) -> PathBuf {
        self.root.join("forecasts").join(model.name())
    }

    pub fn forecast(&self, model: ModelKind, issue: DateTime<Utc>) -> PathBuf {
        self.forecasts(model).join(stamp(issue))
    }

    pub fn forecast_issues(&self, model: ModelKind) -> CliResult<Vec<DateTime<Utc>>> {
        list_stamped(&self.forecasts(model), "")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_file(&self, station_id: &str) -> PathBuf {
        self.models().join(format!("{station_id}.json"))
    }

    pub fn training_report(&self) -> PathBuf {
        self.root.join("training_report.csv")
    }

    pub fn rejected(&self) -> PathBuf {
        self.root.join("rejected_stations.csv")
    }

    pub fn power(&self, model: ModelKind) -> PathBuf {
        self.root.join("power").join(model.name())
    }

    pub fn power_file(&self, model: ModelKind, issue: DateTime<Utc>) -> PathBuf {
        self.power(model).join(format!("{}.csv", stamp(issue)))
    }

    pub fn power_issues(&self, model: ModelKind) -> CliResult<Vec<DateTime<Utc>>> {
        list_stamped(&self.power(model), ".csv")
    }

    pub fn scores(&self) -> PathBuf {
        self.root.join("scores")
    }

    pub fn national(&self) -> PathBuf {
        self.root.join("national")
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamps_round_trip() {
        let t = Utc.with_ymd_and_hms(2021, 6, 10, 9, 45, 0).unwrap();
        assert_eq!(stamp(t), "20210610T0945");
        assert_eq!(parse_stamp(&stamp(t)), Some(t));
        assert_eq!(parse_stamp("nope"), None);
    }
}
