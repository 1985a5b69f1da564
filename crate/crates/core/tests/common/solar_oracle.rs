//! Julian-century solar ephemeris (Meeus / NOAA calculator), accurate to about
//! 0.01° over 1900–2100. Independent of the crate's Fourier-series ephemeris.

use chrono::{DateTime, Timelike, Utc};

pub struct Reference {
    pub zenith: f64,
    pub azimuth: f64,
}

pub fn reference_position(lat: f64, lon: f64, t: DateTime<Utc>) -> Reference {
    let jd = t.timestamp() as f64 / 86400.0 + 2_440_587.5;
    let jc = (jd - 2_451_545.0) / 36_525.0;

    let l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)).rem_euclid(360.0);
    let m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc);
    let e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
    let mr = m.to_radians();
    let c = mr.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * mr).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * mr).sin() * 0.000289;
    let true_long = l0 + c;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let app_long = true_long - 0.00569 - 0.00478 * omega.sin();
    let eps0 = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let eps = eps0 + 0.00256 * omega.cos();
    let decl = (eps.to_radians().sin() * app_long.to_radians().sin()).asin();

    let y = (eps.to_radians() / 2.0).tan().powi(2);
    let l0r = l0.to_radians();
    let eot = 4.0
        * (y * (2.0 * l0r).sin() - 2.0 * e * mr.sin() + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin())
        .to_degrees();

    let minutes = t.hour() as f64 * 60.0 + t.minute() as f64 + t.second() as f64 / 60.0;
    let tst = (minutes + eot + 4.0 * lon).rem_euclid(1440.0);
    let mut ha = tst / 4.0 - 180.0;
    if ha < -180.0 {
        ha += 360.0;
    }
    let phi = lat.to_radians();
    let har = ha.to_radians();
    let cos_z = (phi.sin() * decl.sin() + phi.cos() * decl.cos() * har.cos()).clamp(-1.0, 1.0);
    let zenith = cos_z.acos().to_degrees();
    let azimuth = (har.sin().atan2(har.cos() * phi.sin() - decl.tan() * phi.cos()).to_degrees() + 180.0)
        .rem_euclid(360.0);
    Reference { zenith, azimuth }
}
