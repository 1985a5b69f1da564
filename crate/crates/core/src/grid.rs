//! Georeferenced plate-carrée rasters and the SGF1 binary container.
//!
//! Row 0 is the southernmost row, column 0 the westernmost column. Missing
//! values are stored as quiet NaN.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SGF_MAGIC: &[u8; 4] = b"SGF1";
/// Magic + u32 rows + u32 cols + 3 × f64 + i64 timestamp + u8 kind.
pub const SGF_HEADER_LEN: usize = 4 + 4 + 4 + 8 * 3 + 8 + 1;

/// Quantity stored in a raster; encoded as the SGF1 kind byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Ssi,
    Csi,
    Power,
    FlowU,
    FlowV,
}

impl FieldKind {
    pub fn code(self) -> u8 {
        match self {
            FieldKind::Ssi => 0,
            FieldKind::Csi => 1,
            FieldKind::Power => 2,
            FieldKind::FlowU => 3,
            FieldKind::FlowV => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => FieldKind::Ssi,
            1 => FieldKind::Csi,
            2 => FieldKind::Power,
            3 => FieldKind::FlowU,
            4 => FieldKind::FlowV,
            other => return Err(Error::Format(format!("unknown kind byte {other}"))),
        })
    }
}

/// Regular lat/lon lattice anchored at its south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub lon_min: f64,
    pub lat_min: f64,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl GridGeometry {
    pub fn new(lon_min: f64, lat_min: f64, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidParameter(format!("cell_size must be > 0, got {cell_size}")));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::InvalidParameter(format!("empty grid {n_rows}x{n_cols}")));
        }
        if !lon_min.is_finite() || !lat_min.is_finite() {
            return Err(Error::InvalidParameter("non-finite grid origin".into()));
        }
        Ok(Self { lon_min, lat_min, cell_size, n_cols, n_rows })
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    /// Center of pixel `(row, col)` as `(lon, lat)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.lon_min + (col as f64 + 0.5) * self.cell_size,
            self.lat_min + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Domain center as `(lon, lat)`.
    pub fn center(&self) -> (f64, f64) {
        (
            self.lon_min + 0.5 * self.n_cols as f64 * self.cell_size,
            self.lat_min + 0.5 * self.n_rows as f64 * self.cell_size,
        )
    }

    /// Fractional `(col, row)` pixel coordinates of a point; pixel centers are integral.
    pub fn fractional_position(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.lon_min) / self.cell_size - 0.5,
            (lat - self.lat_min) / self.cell_size - 0.5,
        )
    }

    fn ensure_same(&self, other: &GridGeometry, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!("{what}: geometry {self:?} differs from {other:?}")));
        }
        Ok(())
    }
}

/// A raster of one quantity at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub geometry: GridGeometry,
    pub timestamp: DateTime<Utc>,
    pub kind: FieldKind,
    pub values: Vec<f32>,
}

impl GridField {
    pub fn new(geometry: GridGeometry, timestamp: DateTime<Utc>, kind: FieldKind, values: Vec<f32>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} grid",
                values.len(),
                geometry.n_rows,
                geometry.n_cols
            )));
        }
        Ok(Self { geometry, timestamp, kind, values })
    }

    pub fn filled(geometry: GridGeometry, timestamp: DateTime<Utc>, kind: FieldKind, value: f32) -> Self {
        Self { geometry, timestamp, kind, values: vec![value; geometry.len()] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[self.geometry.index(row, col)]
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn nan_fraction(&self) -> f64 {
        self.n_missing() as f64 / self.values.len() as f64
    }

    /// Mean over finite values, `None` when every value is missing.
    pub fn finite_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .values
            .iter()
            .filter(|v| v.is_finite())
            .fold((0.0f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn ensure_same_geometry(&self, other: &GridField) -> Result<()> {
        self.geometry.ensure_same(&other.geometry, "field")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(SGF_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(SGF_MAGIC);
        out.extend_from_slice(&(g.n_rows as u32).to_le_bytes());
        out.extend_from_slice(&(g.n_cols as u32).to_le_bytes());
        out.extend_from_slice(&g.lon_min.to_le_bytes());
        out.extend_from_slice(&g.lat_min.to_le_bytes());
        out.extend_from_slice(&g.cell_size.to_le_bytes());
        out.extend_from_slice(&self.timestamp.timestamp().to_le_bytes());
        out.push(self.kind.code());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SGF_HEADER_LEN {
            return Err(Error::Format(format!("{} bytes is shorter than the SGF1 header", bytes.len())));
        }
        if &bytes[0..4] != SGF_MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let n_rows = u32_at(4) as usize;
        let n_cols = u32_at(8) as usize;
        let lon_min = f64_at(12);
        let lat_min = f64_at(20);
        let cell_size = f64_at(28);
        let secs = i64::from_le_bytes(bytes[36..44].try_into().unwrap());
        let kind = FieldKind::from_code(bytes[44])?;
        let geometry = GridGeometry::new(lon_min, lat_min, cell_size, n_cols, n_rows)
            .map_err(|e| Error::Format(format!("invalid header: {e}")))?;
        let timestamp = Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| Error::Format(format!("timestamp {secs} out of range")))?;

        let payload = &bytes[SGF_HEADER_LEN..];
        let expected = n_rows
            .checked_mul(n_cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::Corruption { expected, found: payload.len() });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { geometry, timestamp, kind, values })
    }
}

pub fn write_grid(path: impl AsRef<Path>, field: &GridField) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&field.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    GridField::from_bytes(&bytes)
}

/// Block-average by `factor`, ignoring NaN inputs; an all-NaN block stays NaN.
pub fn downsample(field: &GridField, factor: usize) -> Result<GridField> {
    let g = field.geometry;
    if factor < 2 {
        return Err(Error::InvalidParameter(format!("downsample factor must be >= 2, got {factor}")));
    }
    if g.n_rows % factor != 0 || g.n_cols % factor != 0 {
        return Err(Error::Dimension(format!(
            "{}x{} grid is not divisible by factor {factor}",
            g.n_rows, g.n_cols
        )));
    }
    let out_geom = GridGeometry {
        lon_min: g.lon_min,
        lat_min: g.lat_min,
        cell_size: g.cell_size * factor as f64,
        n_cols: g.n_cols / factor,
        n_rows: g.n_rows / factor,
    };
    let mut values = Vec::with_capacity(out_geom.len());
    for bi in 0..out_geom.n_rows {
        for bj in 0..out_geom.n_cols {
            let mut sum = 0.0f64;
            let mut n = 0usize;
            for i in bi * factor..(bi + 1) * factor {
                for j in bj * factor..(bj + 1) * factor {
                    let v = field.get(i, j);
                    if !v.is_nan() {
                        sum += v as f64;
                        n += 1;
                    }
                }
            }
            values.push(if n == 0 { f32::NAN } else { (sum / n as f64) as f32 });
        }
    }
    Ok(GridField { geometry: out_geom, timestamp: field.timestamp, kind: field.kind, values })
}

/// Point sampling scheme for station interpolation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointInterpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Bilinear value at `(lon, lat)`; `Ok(None)` when a contributing pixel is missing.
pub fn interpolate_point(field: &GridField, lon: f64, lat: f64) -> Result<Option<f64>> {
    interpolate_point_with(field, lon, lat, PointInterpolation::Bilinear)
}

pub fn interpolate_point_with(
    field: &GridField,
    lon: f64,
    lat: f64,
    method: PointInterpolation,
) -> Result<Option<f64>> {
    let g = &field.geometry;
    let (x, y) = g.fractional_position(lon, lat);
    const EPS: f64 = 1e-9;
    let max_x = (g.n_cols - 1) as f64;
    let max_y = (g.n_rows - 1) as f64;
    if !(x >= -EPS && x <= max_x + EPS && y >= -EPS && y <= max_y + EPS) {
        return Err(Error::OutOfDomain { lon, lat });
    }
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);

    let value = match method {
        PointInterpolation::Nearest => {
            let v = field.get(y.round() as usize, x.round() as usize);
            (!v.is_nan()).then_some(v as f64)
        }
        PointInterpolation::Bilinear => {
            let j0 = (x.floor() as usize).min(g.n_cols.saturating_sub(2));
            let i0 = (y.floor() as usize).min(g.n_rows.saturating_sub(2));
            let fx = x - j0 as f64;
            let fy = y - i0 as f64;
            let j1 = (j0 + 1).min(g.n_cols - 1);
            let i1 = (i0 + 1).min(g.n_rows - 1);
            let corners = [
                (i0, j0, (1.0 - fy) * (1.0 - fx)),
                (i0, j1, (1.0 - fy) * fx),
                (i1, j0, fy * (1.0 - fx)),
                (i1, j1, fy * fx),
            ];
            let mut acc = 0.0;
            for (i, j, w) in corners {
                let v = field.get(i, j);
                if v.is_nan() {
                    return Ok(None);
                }
                acc += w * v as f64;
            }
            Some(acc)
        }
    };
    Ok(value)
}

/// Time-ordered, uniformly spaced fields on one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSequence {
    fields: Vec<GridField>,
    step: Duration,
}

/// Cadence assumed for single-field sequences.
pub const DEFAULT_STEP_SECS: i64 = 900;

impl FieldSequence {
    /// Builds a sequence, inferring the step from the first pair.
    pub fn new(fields: Vec<GridField>) -> Result<Self> {
        let step = match fields.as_slice() {
            [] => return Err(Error::EmptyInput),
            [_] => Duration::seconds(DEFAULT_STEP_SECS),
            [a, b, ..] => b.timestamp - a.timestamp,
        };
        Self::with_step(fields, step)
    }

    pub fn with_step(fields: Vec<GridField>, step: Duration) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::EmptyInput);
        }
        if step <= Duration::zero() {
            return Err(Error::InvalidParameter(format!("non-positive step {step}")));
        }
        for pair in fields.windows(2) {
            pair[0].ensure_same_geometry(&pair[1])?;
            if pair[1].timestamp - pair[0].timestamp != step {
                return Err(Error::InvalidParameter(format!(
                    "fields at {} and {} are not spaced by {}s",
                    pair[0].timestamp,
                    pair[1].timestamp,
                    step.num_seconds()
                )));
            }
        }
        Ok(Self { fields, step })
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<GridField> {
        self.fields
    }

    pub fn step(&self) -> Duration {
        self.step
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn geometry(&self) -> GridGeometry {
        self.fields[0].geometry
    }

    pub fn last(&self) -> &GridField {
        self.fields.last().expect("sequence is non-empty")
    }
}

/// Number of fields averaged into one hourly mean at 15-min cadence.
pub const FIELDS_PER_HOUR: usize = 4;

/// Pixelwise NaN-ignoring mean of the fields with timestamps in `(hour_end − 1 h, hour_end]`.
pub fn hourly_average(seq: &FieldSequence, hour_end: DateTime<Utc>) -> Result<GridField> {
    let start = hour_end - Duration::hours(1);
    let window: Vec<&GridField> = seq
        .fields()
        .iter()
        .filter(|f| f.timestamp > start && f.timestamp <= hour_end)
        .collect();
    if window.len() < FIELDS_PER_HOUR {
        return Err(Error::InsufficientData(format!(
            "{} field(s) in the hour ending {hour_end}, need {FIELDS_PER_HOUR}",
            window.len()
        )));
    }
    let geometry = seq.geometry();
    let values = (0..geometry.len())
        .map(|k| {
            let (sum, n) = window.iter().fold((0.0f64, 0usize), |(s, n), f| {
                let v = f.values[k];
                if v.is_nan() {
                    (s, n)
                } else {
                    (s + v as f64, n + 1)
                }
            });
            if n == 0 {
                f32::NAN
            } else {
                (sum / n as f64) as f32
            }
        })
        .collect();
    Ok(GridField { geometry, timestamp: hour_end, kind: window[0].kind, values })
}
