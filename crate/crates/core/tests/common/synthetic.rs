//! Analytic test fields: translating them is exact, so the true motion is known.

use chrono::{DateTime, Duration, TimeZone, Utc};
use pvcast::grid::{FieldKind, FieldSequence, GridField, GridGeometry};

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 10, 10, 0, 0).unwrap()
}

pub fn geometry(rows: usize, cols: usize) -> GridGeometry {
    GridGeometry::new(8.0, 46.0, 0.02, cols, rows).unwrap()
}

/// Sum of smooth plane waves evaluated at column `x`, row `y`.
pub fn texture(x: f64, y: f64) -> f64 {
    const WAVES: [(f64, f64, f64, f64); 5] = [
        (0.21, 0.05, 0.3, 0.0),
        (-0.07, 0.17, 0.2, 1.3),
        (0.11, -0.13, 0.15, 2.1),
        (0.04, 0.29, 0.1, 0.4),
        (0.33, 0.19, 0.05, 5.0),
    ];
    0.6 + WAVES.iter().map(|&(kx, ky, a, p)| a * (kx * x + ky * y + p).sin()).sum::<f64>()
}

pub fn blob(x: f64, y: f64, cx: f64, cy: f64, sigma: f64) -> f64 {
    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
    1.0 - 0.7 * (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Field whose pixel (i, j) holds `f(j - shift_x, i - shift_y)`.
pub fn shifted(
    geom: GridGeometry,
    t: DateTime<Utc>,
    shift_x: f64,
    shift_y: f64,
    f: impl Fn(f64, f64) -> f64,
) -> GridField {
    let mut values = Vec::with_capacity(geom.len());
    for i in 0..geom.n_rows {
        for j in 0..geom.n_cols {
            values.push(f(j as f64 - shift_x, i as f64 - shift_y) as f32);
        }
    }
    GridField::new(geom, t, FieldKind::Csi, values).unwrap()
}

/// `n` frames of `f` translating by `(u, v)` px per 15 min.
pub fn translating(geom: GridGeometry, n: usize, u: f64, v: f64, f: impl Fn(f64, f64) -> f64 + Copy) -> FieldSequence {
    let fields = (0..n)
        .map(|s| shifted(geom, t0() + Duration::minutes(15 * s as i64), u * s as f64, v * s as f64, f))
        .collect();
    FieldSequence::new(fields).unwrap()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
