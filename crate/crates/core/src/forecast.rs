//! Ensemble forecasts: fields per lead time and member, with issue metadata.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{read_grid, write_grid, FieldKind, GridField, GridGeometry};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Lead `l` (1-based) is valid at `issue_time + l · step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub model: String,
    pub issue_time: DateTime<Utc>,
    pub step: Duration,
    pub seed: u64,
    /// `fields[l - 1][e]` is member `e` at lead `l`.
    fields: Vec<Vec<GridField>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastManifest {
    pub model: String,
    pub issue_time: DateTime<Utc>,
    pub step_secs: i64,
    pub n_leads: usize,
    pub n_members: usize,
    pub kind: u8,
    pub seed: u64,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn member_file_name(lead: usize, member: usize) -> String {
    format!("lead{lead}_member{member}.sgf")
}

impl ForecastSet {
    pub fn new(
        model: impl Into<String>,
        issue_time: DateTime<Utc>,
        step: Duration,
        seed: u64,
        fields: Vec<Vec<GridField>>,
    ) -> Result<Self> {
        let n_members = fields.first().map_or(0, Vec::len);
        if n_members == 0 {
            return Err(Error::EmptyInput);
        }
        let geometry = fields[0][0].geometry;
        for lead in &fields {
            if lead.len() != n_members {
                return Err(Error::MixedEnsemble { expected: n_members, found: lead.len() });
            }
            if lead.iter().any(|f| f.geometry != geometry) {
                return Err(Error::Dimension("forecast members differ in geometry".into()));
            }
        }
        if step <= Duration::zero() {
            return Err(Error::InvalidParameter(format!("non-positive forecast step {step}")));
        }
        Ok(Self { model: model.into(), issue_time, step, seed, fields })
    }

    pub fn n_leads(&self) -> usize {
        self.fields.len()
    }

    pub fn n_members(&self) -> usize {
        self.fields[0].len()
    }

    pub fn geometry(&self) -> GridGeometry {
        self.fields[0][0].geometry
    }

    pub fn kind(&self) -> FieldKind {
        self.fields[0][0].kind
    }

    pub fn valid_time(&self, lead: usize) -> DateTime<Utc> {
        self.issue_time + self.step * lead as i32
    }

    pub fn lead_minutes(&self, lead: usize) -> i64 {
        self.step.num_minutes() * lead as i64
    }

    /// Members at 1-based `lead`.
    pub fn lead(&self, lead: usize) -> &[GridField] {
        &self.fields[lead - 1]
    }

    pub fn member(&self, lead: usize, member: usize) -> &GridField {
        &self.fields[lead - 1][member]
    }

    /// Applies `f` to every field, keeping the metadata.
    pub fn map_fields(&self, mut f: impl FnMut(&GridField) -> Result<GridField>) -> Result<Self> {
        let fields = self
            .fields
            .iter()
            .map(|lead| lead.iter().map(&mut f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.model.clone(), self.issue_time, self.step, self.seed, fields)
    }

    pub fn manifest(&self, config: serde_json::Value) -> ForecastManifest {
        ForecastManifest {
            model: self.model.clone(),
            issue_time: self.issue_time,
            step_secs: self.step.num_seconds(),
            n_leads: self.n_leads(),
            n_members: self.n_members(),
            kind: self.kind().code(),
            seed: self.seed,
            config,
        }
    }

    /// Writes one SGF1 file per (lead, member) and the manifest.
    pub fn write_dir(&self, dir: impl AsRef<Path>, config: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for lead in 1..=self.n_leads() {
            for (e, field) in self.lead(lead).iter().enumerate() {
                write_grid(dir.join(member_file_name(lead, e)), field)?;
            }
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest(config))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ForecastManifest = serde_json::from_str(&text)?;
        let mut fields = Vec::with_capacity(manifest.n_leads);
        for lead in 1..=manifest.n_leads {
            let members = (0..manifest.n_members)
                .map(|e| read_grid(dir.join(member_file_name(lead, e))))
                .collect::<Result<Vec<_>>>()?;
            fields.push(members);
        }
        Self::new(manifest.model, manifest.issue_time, Duration::seconds(manifest.step_secs), manifest.seed, fields)
    }
}
