//! Subcommand implementations. Each returns a summary and fails only when
//! no work at all could be done.

pub mod aggregate;
pub mod evaluate;
pub mod nowcast;
pub mod power;
pub mod synth;

use std::collections::HashMap;

use chrono::{DateTime, Utc};

use pvcast::clearsky::{clearsky_field, ClearSkyParams};
use pvcast::grid::{GridField, GridGeometry};

/// Clear-sky fields on one geometry, memoized by instant.
pub(crate) struct ClearSkyCache {
    geometry: GridGeometry,
    params: ClearSkyParams,
    fields: HashMap<DateTime<Utc>, GridField>,
}

impl ClearSkyCache {
    pub(crate) fn new(geometry: GridGeometry, params: ClearSkyParams) -> Self {
        Self { geometry, params, fields: HashMap::new() }
    }

    pub(crate) fn get(&mut self, t: DateTime<Utc>) -> &GridField {
        self.fields.entry(t).or_insert_with(|| clearsky_field(&self.geometry, t, &self.params))
    }
}
