//! Station registry and per-station power series.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verify::empirical_quantile;

/// One registry row: `id,lon,lat,elevation_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationInfo {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub elevation_m: f64,
}

/// Power measurements in kW; missing values are NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerSeries {
    pub timestamps: Vec<DateTime<Utc>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    timestamp_utc: DateTime<Utc>,
    power_kw: Option<f64>,
}

impl PowerSeries {
    pub fn new(timestamps: Vec<DateTime<Utc>>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Dimension(format!("{} timestamps for {} values", timestamps.len(), values.len())));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("series timestamps must be strictly increasing".into()));
        }
        Ok(Self { timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at `t`, `None` when absent or missing.
    pub fn at(&self, t: DateTime<Utc>) -> Option<f64> {
        let k = self.timestamps.binary_search(&t).ok()?;
        let v = self.values[k];
        v.is_finite().then_some(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (DateTime<Utc>, f64)> + '_ {
        self.timestamps.iter().copied().zip(self.values.iter().copied())
    }

    /// 95th percentile of the non-missing values.
    pub fn p95(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(empirical_quantile(&v, 0.95))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let (mut timestamps, mut values) = (Vec::new(), Vec::new());
        for row in reader.deserialize::<SeriesRow>() {
            let row = row?;
            timestamps.push(row.timestamp_utc);
            values.push(row.power_kw.filter(|v| v.is_finite()).unwrap_or(f64::NAN));
        }
        Self::new(timestamps, values).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for (t, v) in self.iter() {
            w.serialize(SeriesRow { timestamp_utc: t, power_kw: v.is_finite().then_some(v) })?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// A station with its measurements and normalization capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub info: StationInfo,
    pub series: PowerSeries,
    pub p95: f64,
}

impl Station {
    /// Computes `p95`; a station without a positive one is not admitted.
    pub fn new(info: StationInfo, series: PowerSeries) -> Result<Self> {
        match series.p95() {
            Some(p95) if p95 > 0.0 => Ok(Self { info, series, p95 }),
            other => Err(Error::DataQuality(format!("station {}: p95 {:?} is not positive", info.id, other))),
        }
    }

    pub fn id(&self) -> &str {
        &self.info.id
    }
}

pub fn read_registry(path: impl AsRef<Path>) -> Result<Vec<StationInfo>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<StationInfo>, _>>()?;
    let mut ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Format(format!("duplicate station id in {}", path.as_ref().display())));
    }
    Ok(rows)
}

pub fn write_registry(path: impl AsRef<Path>, stations: &[StationInfo]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for s in stations {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// File name of a station's series inside a series directory.
pub fn series_file_name(id: &str) -> String {
    format!("{id}.csv")
}

/// Reads the registry and every station's series from `series_dir`.
pub fn load_fleet(registry: impl AsRef<Path>, series_dir: impl AsRef<Path>) -> Result<Vec<(StationInfo, PowerSeries)>> {
    read_registry(registry)?
        .into_iter()
        .map(|info| {
            let series = PowerSeries::read_csv(series_dir.as_ref().join(series_file_name(&info.id)))?;
            Ok((info, series))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn series(values: &[f64]) -> PowerSeries {
        let t0 = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
        PowerSeries::new((0..values.len()).map(|k| t0 + Duration::minutes(15 * k as i64)).collect(), values.to_vec()).unwrap()
    }

    #[test]
    fn p95_skips_missing() {
        let mut v: Vec<f64> = (0..=100).map(f64::from).collect();
        v.push(f64::NAN);
        assert!((series(&v).p95().unwrap() - 95.0).abs() < 1e-12);
        assert!(Station::new(
            StationInfo { id: "z".into(), lon: 0.0, lat: 0.0, elevation_m: 0.0 },
            series(&[0.0, 0.0])
        )
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = series(&[0.0, 1.5, f64::NAN, 2.25]);
        let path = dir.path().join("s.csv");
        s.write_csv(&path).unwrap();
        let back = PowerSeries::read_csv(&path).unwrap();
        assert_eq!(back.timestamps, s.timestamps);
        assert!(back.values[2].is_nan());
        assert_eq!(back.values[3], 2.25);

        let reg = vec![StationInfo { id: "a".into(), lon: 8.1, lat: 46.2, elevation_m: 512.0 }];
        write_registry(dir.path().join("r.csv"), &reg).unwrap();
        assert_eq!(read_registry(dir.path().join("r.csv")).unwrap(), reg);
    }
}
