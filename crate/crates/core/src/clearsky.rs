//! Solar geometry, Ineichen–Perez clear-sky irradiance and SSI ↔ CSI conversion.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldKind, GridField, GridGeometry};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    /// Degrees from the local vertical, in [0, 180].
    pub zenith: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub azimuth: f64,
    /// `90 − zenith`.
    pub elevation: f64,
}

impl SolarPosition {
    fn from_zenith_azimuth(zenith: f64, azimuth: f64) -> Self {
        let mut az = azimuth.rem_euclid(360.0);
        if az >= 360.0 {
            az = 0.0;
        }
        Self { zenith, azimuth: az, elevation: 90.0 - zenith }
    }
}

fn fractional_hour(t: &DateTime<Utc>) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + (t.second() as f64 + t.nanosecond() as f64 * 1e-9) / 3600.0
}

/// Declination (radians) and equation of time (minutes) from the Astronomical
/// Almanac low-precision solar coordinates.
fn declination_and_eot(t: &DateTime<Utc>) -> (f64, f64) {
    let days = (t.timestamp() as f64 + t.timestamp_subsec_nanos() as f64 * 1e-9) / 86_400.0 + 2_440_587.5
        - 2_451_545.0;
    let mean_long = (280.460 + 0.985_647_4 * days).rem_euclid(360.0);
    let anomaly = (357.528 + 0.985_600_3 * days).rem_euclid(360.0).to_radians();
    let ecl_long = (mean_long + 1.915 * anomaly.sin() + 0.020 * (2.0 * anomaly).sin()).to_radians();
    let obliquity = (23.439 - 4.0e-7 * days).to_radians();
    let right_ascension = (obliquity.cos() * ecl_long.sin()).atan2(ecl_long.cos()).to_degrees();
    let decl = (obliquity.sin() * ecl_long.sin()).asin();
    let mut eot_deg = (mean_long - right_ascension).rem_euclid(360.0);
    if eot_deg > 180.0 {
        eot_deg -= 360.0;
    }
    (decl, 4.0 * eot_deg)
}

/// Low-precision solar ephemeris (declination, equation of time, hour angle).
/// No refraction correction.
pub fn solar_position(lat: f64, lon: f64, t: DateTime<Utc>) -> SolarPosition {
    let (decl, eot) = declination_and_eot(&t);
    let true_solar_minutes = fractional_hour(&t) * 60.0 + eot + 4.0 * lon;
    let hour_angle = (true_solar_minutes / 4.0 - 180.0).to_radians();
    let phi = lat.to_radians();

    let cos_zenith = (phi.sin() * decl.sin() + phi.cos() * decl.cos() * hour_angle.cos()).clamp(-1.0, 1.0);
    let zenith = cos_zenith.acos().to_degrees();
    let azimuth = hour_angle
        .sin()
        .atan2(hour_angle.cos() * phi.sin() - decl.tan() * phi.cos())
        .to_degrees()
        + 180.0;
    SolarPosition::from_zenith_azimuth(zenith, azimuth)
}

/// Approximate UTC instant of solar noon at `lon` on `date`.
pub fn solar_noon(lon: f64, date: NaiveDate) -> DateTime<Utc> {
    let noon = Utc.from_utc_datetime(&date.and_hms_opt(12, 0, 0).unwrap());
    let (_, eot) = declination_and_eot(&noon);
    noon - Duration::milliseconds(((4.0 * lon + eot) * 60_000.0).round() as i64)
}

/// Clear-sky model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearSkyParams {
    /// Linke turbidity for January … December.
    pub linke_turbidity: [f64; 12],
    /// Meters above sea level.
    pub site_elevation: f64,
}

pub const DEFAULT_LINKE_TURBIDITY: f64 = 3.0;

impl Default for ClearSkyParams {
    fn default() -> Self {
        Self { linke_turbidity: [DEFAULT_LINKE_TURBIDITY; 12], site_elevation: 0.0 }
    }
}

impl ClearSkyParams {
    pub fn new(linke_turbidity: [f64; 12], site_elevation: f64) -> Result<Self> {
        let p = Self { linke_turbidity, site_elevation };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(tl: f64, site_elevation: f64) -> Result<Self> {
        Self::new([tl; 12], site_elevation)
    }

    pub fn with_elevation(&self, site_elevation: f64) -> Result<Self> {
        Self::new(self.linke_turbidity, site_elevation)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(tl) = self.linke_turbidity.iter().find(|tl| !(1.0..=10.0).contains(*tl)) {
            return Err(Error::InvalidParameter(format!("Linke turbidity {tl} outside [1, 10]")));
        }
        if !(-500.0..=9000.0).contains(&self.site_elevation) {
            return Err(Error::InvalidParameter(format!(
                "site elevation {} m outside [-500, 9000]",
                self.site_elevation
            )));
        }
        Ok(())
    }

    /// Reads a `month,TL` climatology with one row per calendar month.
    pub fn from_turbidity_csv(path: impl AsRef<Path>, site_elevation: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            month: usize,
            #[serde(rename = "TL")]
            tl: f64,
        }
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let mut tl = [f64::NAN; 12];
        for row in reader.deserialize::<Row>() {
            let row = row?;
            if !(1..=12).contains(&row.month) {
                return Err(Error::Format(format!("month {} in {}", row.month, path.display())));
            }
            tl[row.month - 1] = row.tl;
        }
        if let Some(m) = tl.iter().position(|v| v.is_nan()) {
            return Err(Error::Format(format!("{} has no row for month {}", path.display(), m + 1)));
        }
        Self::new(tl, site_elevation)
    }

    pub fn turbidity_at(&self, t: &DateTime<Utc>) -> f64 {
        self.linke_turbidity[t.month0() as usize]
    }
}

/// Top-of-atmosphere normal irradiance (Spencer), W m⁻².
pub fn extraterrestrial_irradiance(t: &DateTime<Utc>) -> f64 {
    let b = 2.0 * PI * t.ordinal0() as f64 / 365.0;
    1366.1
        * (1.00011 + 0.034221 * b.cos() + 0.00128 * b.sin() + 0.000719 * (2.0 * b).cos()
            + 0.000077 * (2.0 * b).sin())
}

/// Kasten–Young relative optical air mass.
pub fn relative_airmass(zenith_deg: f64) -> f64 {
    1.0 / (zenith_deg.to_radians().cos() + 0.50572 * (96.07995 - zenith_deg).powf(-1.6364))
}

/// Standard-atmosphere pressure at `altitude` meters, Pa.
pub fn pressure_at_altitude(altitude: f64) -> f64 {
    101_325.0 * (1.0 - 2.25577e-5 * altitude).powf(5.25588)
}

/// Ineichen–Perez global horizontal clear-sky irradiance, W m⁻².
pub fn clearsky_ghi(pos: &SolarPosition, params: &ClearSkyParams, t: DateTime<Utc>) -> f64 {
    if pos.elevation <= 0.0 {
        return 0.0;
    }
    let h = params.site_elevation;
    let tl = params.turbidity_at(&t);
    let am = relative_airmass(pos.zenith) * pressure_at_altitude(h) / 101_325.0;
    let fh1 = (-h / 8000.0).exp();
    let fh2 = (-h / 1250.0).exp();
    let cg1 = 5.09e-5 * h + 0.868;
    let cg2 = 3.92e-5 * h + 0.0387;
    let cos_z = pos.zenith.to_radians().cos();
    let ghi = cg1 * extraterrestrial_irradiance(&t) * cos_z * (-cg2 * am * (fh1 + fh2 * (tl - 1.0))).exp();
    ghi.max(0.0)
}

/// Clear-sky GHI at every pixel center.
pub fn clearsky_field(geometry: &GridGeometry, t: DateTime<Utc>, params: &ClearSkyParams) -> GridField {
    let mut values = Vec::with_capacity(geometry.len());
    for i in 0..geometry.n_rows {
        for j in 0..geometry.n_cols {
            let (lon, lat) = geometry.pixel_center(i, j);
            let pos = solar_position(lat, lon, t);
            values.push(clearsky_ghi(&pos, params, t) as f32);
        }
    }
    GridField { geometry: *geometry, timestamp: t, kind: FieldKind::Ssi, values }
}

/// Night threshold and clip ceiling of the clear-sky index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiConversion {
    /// Clear-sky GHI (W m⁻²) at or below which CSI is undefined.
    pub night_threshold: f64,
    pub csi_max: f64,
}

impl Default for CsiConversion {
    fn default() -> Self {
        Self { night_threshold: 20.0, csi_max: 1.4 }
    }
}

pub fn ssi_to_csi(ssi: &GridField, clear: &GridField, conv: &CsiConversion) -> Result<GridField> {
    ssi.ensure_same_geometry(clear)?;
    if ssi.timestamp != clear.timestamp {
        return Err(Error::Dimension(format!(
            "SSI at {} paired with clear-sky field at {}",
            ssi.timestamp, clear.timestamp
        )));
    }
    let values = ssi
        .values
        .iter()
        .zip(&clear.values)
        .map(|(&s, &cs)| {
            if s.is_nan() || !(cs as f64 > conv.night_threshold) {
                f32::NAN
            } else {
                ((s as f64 / cs as f64).clamp(0.0, conv.csi_max)) as f32
            }
        })
        .collect();
    Ok(GridField { geometry: ssi.geometry, timestamp: ssi.timestamp, kind: FieldKind::Csi, values })
}

pub fn csi_to_ssi(csi: &GridField, clear: &GridField, conv: &CsiConversion) -> Result<GridField> {
    csi.ensure_same_geometry(clear)?;
    let values = csi
        .values
        .iter()
        .zip(&clear.values)
        .map(|(&k, &cs)| {
            if k.is_nan() {
                f32::NAN
            } else if !(cs as f64 > conv.night_threshold) {
                0.0
            } else {
                (k as f64 * cs as f64) as f32
            }
        })
        .collect();
    Ok(GridField { geometry: csi.geometry, timestamp: csi.timestamp, kind: FieldKind::Ssi, values })
}

/// Instants where solar elevation crosses zero around solar noon of `date`.
pub fn daylight_window(lat: f64, lon: f64, date: NaiveDate) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
    let noon = solar_noon(lon, date);
    let elevation = |t: DateTime<Utc>| solar_position(lat, lon, t).elevation;
    let polar = || Error::PolarCondition { lat, lon, date };
    if elevation(noon) <= 0.0 {
        return Err(polar());
    }
    let coarse = Duration::minutes(10);
    let half_day = 72; // 12 h of 10-min steps

    let find = |direction: i32| -> Option<DateTime<Utc>> {
        let mut inside = noon;
        for _ in 0..half_day {
            let next = inside + coarse * direction;
            if elevation(next) <= 0.0 {
                return Some(bisect(inside, next, &elevation));
            }
            inside = next;
        }
        None
    };
    let sunrise = find(-1).ok_or_else(polar)?;
    let sunset = find(1).ok_or_else(polar)?;
    Ok((sunrise, sunset))
}

/// Refines a zero crossing between a sunlit instant and a dark one to one second.
fn bisect(
    mut lit: DateTime<Utc>,
    mut dark: DateTime<Utc>,
    elevation: &impl Fn(DateTime<Utc>) -> f64,
) -> DateTime<Utc> {
    while (dark - lit).num_seconds().abs() > 1 {
        let mid = lit + (dark - lit) / 2;
        if elevation(mid) > 0.0 {
            lit = mid;
        } else {
            dark = mid;
        }
    }
    lit + (dark - lit) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utc(y: i32, m: u32, d: u32, hh: u32, mm: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, hh, mm, 0).unwrap()
    }

    #[test]
    fn zenith_and_elevation_are_complementary() {
        for (lat, lon, t) in [(0.0, 0.0, utc(2020, 3, 20, 12, 7)), (47.0, 8.0, utc(2021, 1, 5, 3, 0))] {
            let p = solar_position(lat, lon, t);
            assert!((p.zenith + p.elevation - 90.0).abs() < 1e-12);
            assert!((0.0..360.0).contains(&p.azimuth));
        }
    }

    #[test]
    fn below_horizon_gives_zero() {
        let pos = SolarPosition::from_zenith_azimuth(95.0, 10.0);
        assert_eq!(clearsky_ghi(&pos, &ClearSkyParams::default(), utc(2020, 6, 1, 0, 0)), 0.0);
    }

    #[test]
    fn monotone_in_elevation() {
        let params = ClearSkyParams::default();
        let t = utc(2020, 6, 1, 12, 0);
        let mut prev = 0.0;
        for z10 in (0..=900).rev() {
            let pos = SolarPosition::from_zenith_azimuth(z10 as f64 / 10.0, 180.0);
            let ghi = clearsky_ghi(&pos, &params, t);
            assert!(ghi >= prev, "non-monotone at zenith {}", z10 as f64 / 10.0);
            prev = ghi;
        }
    }

    #[test]
    fn param_validation() {
        assert!(ClearSkyParams::constant(0.5, 0.0).is_err());
        assert!(ClearSkyParams::constant(3.0, 9500.0).is_err());
        assert!(ClearSkyParams::constant(3.0, 2500.0).is_ok());
    }

    fn one_px(v: f32, t: DateTime<Utc>) -> GridField {
        let g = GridGeometry::new(0.0, 0.0, 1.0, 1, 1).unwrap();
        GridField::new(g, t, FieldKind::Ssi, vec![v]).unwrap()
    }

    #[test]
    fn csi_conversion_rules() {
        let t = utc(2020, 6, 1, 12, 0);
        let conv = CsiConversion::default();
        let csi = |s, cs| ssi_to_csi(&one_px(s, t), &one_px(cs, t), &conv).unwrap().values[0];
        assert_eq!(csi(500.0, 1000.0), 0.5);
        assert!(csi(3.0, 5.0).is_nan());
        assert!((csi(2000.0, 1000.0) - 1.4).abs() < 1e-7);
        assert!(csi(f32::NAN, 1000.0).is_nan());

        let ssi = |k, cs| csi_to_ssi(&one_px(k, t), &one_px(cs, t), &conv).unwrap().values[0];
        assert_eq!(ssi(1.0, 812.5), 812.5);
        assert_eq!(ssi(0.8, 0.0), 0.0);
        assert!(ssi(f32::NAN, 800.0).is_nan());
    }

    #[test]
    fn conversion_rejects_mismatch() {
        let t = utc(2020, 6, 1, 12, 0);
        let conv = CsiConversion::default();
        let g2 = GridGeometry::new(0.0, 0.0, 1.0, 2, 1).unwrap();
        let two = GridField::filled(g2, t, FieldKind::Ssi, 1.0);
        assert!(matches!(ssi_to_csi(&one_px(1.0, t), &two, &conv), Err(Error::Dimension(_))));
        assert!(matches!(csi_to_ssi(&one_px(1.0, t), &two, &conv), Err(Error::Dimension(_))));
        let later = one_px(900.0, t + Duration::minutes(15));
        assert!(ssi_to_csi(&one_px(1.0, t), &later, &conv).is_err());
    }

    #[test]
    fn daylight_ordering() {
        let date = NaiveDate::from_ymd_opt(2020, 4, 10).unwrap();
        let (rise, set) = daylight_window(46.8, 8.2, date).unwrap();
        let noon = solar_noon(8.2, date);
        assert!(rise < noon && noon < set);
        assert!(solar_position(46.8, 8.2, rise + Duration::minutes(2)).elevation > 0.0);
        assert!(solar_position(46.8, 8.2, rise - Duration::minutes(2)).elevation < 0.0);
    }

    #[test]
    fn polar_conditions() {
        let summer = NaiveDate::from_ymd_opt(2020, 6, 21).unwrap();
        assert!(matches!(daylight_window(66.8, 0.0, summer), Err(Error::PolarCondition { .. })));
        let winter = NaiveDate::from_ymd_opt(2020, 12, 21).unwrap();
        assert!(matches!(daylight_window(80.0, 0.0, winter), Err(Error::PolarCondition { .. })));
    }

    #[test]
    fn turbidity_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tl.csv");
        let mut body = String::from("month,TL\n");
        for m in 1..=12 {
            body.push_str(&format!("{m},{}\n", 2.0 + m as f64 / 10.0));
        }
        std::fs::write(&path, body).unwrap();
        let p = ClearSkyParams::from_turbidity_csv(&path, 400.0).unwrap();
        assert_eq!(p.linke_turbidity[0], 2.1);
        assert_eq!(p.turbidity_at(&utc(2020, 12, 3, 0, 0)), 3.2);

        std::fs::write(&path, "month,TL\n1,3.0\n").unwrap();
        assert!(ClearSkyParams::from_turbidity_csv(&path, 0.0).is_err());
    }
}
