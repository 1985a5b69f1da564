//! Cloud motion vectors: dense pyramidal Lucas–Kanade estimation,
//! backward semi-Lagrangian advection and ensemble perturbation of the vectors.

use chrono::{DateTime, Utc};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldKind, FieldSequence, GridField, GridGeometry};
use crate::rng::{keyed_rng, Stream};

/// Per-pixel displacement in pixels per time step; `u` east, `v` north.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub geometry: GridGeometry,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self { geometry, u: vec![0.0; geometry.len()], v: vec![0.0; geometry.len()] }
    }

    pub fn uniform(geometry: GridGeometry, u: f32, v: f32) -> Self {
        Self { geometry, u: vec![u; geometry.len()], v: vec![v; geometry.len()] }
    }

    pub fn new(geometry: GridGeometry, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != geometry.len() || v.len() != geometry.len() {
            return Err(Error::Dimension(format!(
                "flow components of {} and {} values for {} pixels",
                u.len(),
                v.len(),
                geometry.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("flow vectors must be finite".into()));
        }
        Ok(Self { geometry, u, v })
    }

    /// The two components as SGF1-ready fields (kinds `FlowU`, `FlowV`).
    pub fn to_fields(&self, timestamp: DateTime<Utc>) -> (GridField, GridField) {
        (
            GridField { geometry: self.geometry, timestamp, kind: FieldKind::FlowU, values: self.u.clone() },
            GridField { geometry: self.geometry, timestamp, kind: FieldKind::FlowV, values: self.v.clone() },
        )
    }

    pub fn from_fields(u: &GridField, v: &GridField) -> Result<Self> {
        u.ensure_same_geometry(v)?;
        if u.kind != FieldKind::FlowU || v.kind != FieldKind::FlowV {
            return Err(Error::Format(format!("expected flow-u/flow-v fields, got {:?}/{:?}", u.kind, v.kind)));
        }
        Self::new(u.geometry, u.values.clone(), v.values.clone())
    }

    pub fn speed(&self, k: usize) -> f64 {
        (self.u[k] as f64).hypot(self.v[k] as f64)
    }
}

/// Tuning of the dense Lucas–Kanade estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LucasKanadeParams {
    /// Half-width of the Gaussian window, pixels.
    pub half_width: usize,
    pub pyramid_levels: usize,
    /// Gauss–Newton refinements per pyramid level.
    pub iterations: usize,
    /// Smallest eigenvalue of the window-averaged structure tensor.
    pub min_eigenvalue: f64,
    /// Windows with a smaller valid-weight fraction are ill-conditioned.
    pub min_valid_fraction: f64,
    /// Inputs with a larger NaN fraction are rejected.
    pub max_nan_fraction: f64,
}

impl Default for LucasKanadeParams {
    fn default() -> Self {
        Self {
            half_width: 8,
            pyramid_levels: 3,
            iterations: 5,
            min_eigenvalue: 1e-4,
            min_valid_fraction: 0.3,
            max_nan_fraction: 0.5,
        }
    }
}

/// Dense motion averaged over consecutive pairs of the sequence.
pub fn estimate_flow(seq: &FieldSequence) -> Result<FlowField> {
    estimate_flow_with(seq, &LucasKanadeParams::default())
}

pub fn estimate_flow_with(seq: &FieldSequence, params: &LucasKanadeParams) -> Result<FlowField> {
    if seq.len() < 2 {
        return Err(Error::InsufficientData(format!("optical flow needs 2 fields, got {}", seq.len())));
    }
    for f in seq.fields() {
        let frac = f.nan_fraction();
        if frac > params.max_nan_fraction {
            return Err(Error::DataQuality(format!(
                "field at {} is {:.0}% missing",
                f.timestamp,
                100.0 * frac
            )));
        }
    }
    let geometry = seq.geometry();
    let pairs: Vec<Plane> = seq
        .fields()
        .windows(2)
        .map(|w| {
            let mut a = Image::from_field(&w[0]);
            let mut b = Image::from_field(&w[1]);
            standardize_pair(&mut a, &mut b);
            pair_flow(&a, &b, params)
        })
        .collect();

    let n = pairs.len() as f64;
    let mut u = vec![0.0f32; geometry.len()];
    let mut v = vec![0.0f32; geometry.len()];
    for k in 0..geometry.len() {
        let (su, sv) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.u[k], b + p.v[k]));
        u[k] = (su / n) as f32;
        v[k] = (sv / n) as f32;
    }
    FlowField::new(geometry, u, v)
}

/// Row-major f64 image; NaN marks missing pixels.
#[derive(Debug, Clone)]
struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    fn from_field(f: &GridField) -> Self {
        Self {
            rows: f.geometry.n_rows,
            cols: f.geometry.n_cols,
            data: f.values.iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Half-resolution image: separable [1 3 3 1]/8 binomial low-pass centered
    /// on each 2×2 block, ignoring NaN and taps outside the image.
    fn half(&self) -> Self {
        const TAPS: [f64; 4] = [1.0, 3.0, 3.0, 1.0];
        let rows = self.rows / 2;
        let cols = self.cols / 2;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let (mut s, mut w) = (0.0, 0.0);
                for (a, ta) in TAPS.iter().enumerate() {
                    let ii = (2 * i + a) as i64 - 1;
                    if ii < 0 || ii >= self.rows as i64 {
                        continue;
                    }
                    for (b, tb) in TAPS.iter().enumerate() {
                        let jj = (2 * j + b) as i64 - 1;
                        if jj < 0 || jj >= self.cols as i64 {
                            continue;
                        }
                        let v = self.at(ii as usize, jj as usize);
                        if !v.is_nan() {
                            s += ta * tb * v;
                            w += ta * tb;
                        }
                    }
                }
                data.push(if w == 0.0 { f64::NAN } else { s / w });
            }
        }
        Self { rows, cols, data }
    }
}

/// Rescales both images by their pooled standard deviation so that the
/// eigenvalue threshold does not depend on intensity units.
fn standardize_pair(a: &mut Image, b: &mut Image) {
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for &x in a.data.iter().chain(&b.data).filter(|x| !x.is_nan()) {
        n += 1.0;
        s += x;
        s2 += x * x;
    }
    if n < 2.0 {
        return;
    }
    let mean = s / n;
    let sd = ((s2 / n - mean * mean).max(0.0)).sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return;
    }
    for x in a.data.iter_mut().chain(b.data.iter_mut()) {
        *x = (*x - mean) / sd;
    }
}

/// Displacement components of one image pair.
struct Plane {
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Bilinear sample at fractional `(x, y)` = (column, row). NaN outside the
/// hull of pixel centers or when a neighbor with nonzero weight is missing.
#[inline]
pub(crate) fn sample_bilinear(data: &[f64], rows: usize, cols: usize, x: f64, y: f64) -> f64 {
    const EPS: f64 = 1e-9;
    let max_x = (cols - 1) as f64;
    let max_y = (rows - 1) as f64;
    if !(x >= -EPS && x <= max_x + EPS && y >= -EPS && y <= max_y + EPS) {
        return f64::NAN;
    }
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let j0 = (x.floor() as usize).min(cols.saturating_sub(2));
    let i0 = (y.floor() as usize).min(rows.saturating_sub(2));
    let fx = x - j0 as f64;
    let fy = y - i0 as f64;
    let j1 = (j0 + 1).min(cols - 1);
    let i1 = (i0 + 1).min(rows - 1);
    let mut acc = 0.0;
    for (i, j, w) in [
        (i0, j0, (1.0 - fy) * (1.0 - fx)),
        (i0, j1, (1.0 - fy) * fx),
        (i1, j0, fy * (1.0 - fx)),
        (i1, j1, fy * fx),
    ] {
        if w == 0.0 {
            continue;
        }
        let val = data[i * cols + j];
        if val.is_nan() {
            return f64::NAN;
        }
        acc += w * val;
    }
    acc
}

fn gaussian_kernel(half_width: usize) -> Vec<f64> {
    let sigma = (half_width as f64 / 2.0).max(0.5);
    let k: Vec<f64> = (-(half_width as i64)..=half_width as i64)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|w| w / s).collect()
}

/// Separable convolution with zero padding.
fn blur(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut tmp = vec![0.0; data.len()];
    tmp.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
        let row = &data[i * cols..(i + 1) * cols];
        for (j, o) in out.iter_mut().enumerate() {
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(cols - 1);
            let mut acc = 0.0;
            for jj in lo..=hi {
                acc += kernel[jj + r - j] * row[jj];
            }
            *o = acc;
        }
    });
    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(cols).enumerate().for_each(|(i, o)| {
        let lo = i.saturating_sub(r);
        let hi = (i + r).min(rows - 1);
        for ii in lo..=hi {
            let w = kernel[ii + r - i];
            let src = &tmp[ii * cols..(ii + 1) * cols];
            for (x, s) in o.iter_mut().zip(src) {
                *x += w * s;
            }
        }
    });
    out
}

fn smooth(data: &[f64], support: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    blur(data, rows, cols, kernel).iter().zip(support).map(|(x, w)| x / w).collect()
}

/// Central-difference gradient, one-sided at borders; NaN when a stencil value is missing.
fn gradients(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (img.rows, img.cols);
    let mut gx = vec![f64::NAN; rows * cols];
    let mut gy = vec![f64::NAN; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            if cols > 1 {
                let (a, b, d) = match j {
                    0 => (img.at(i, 0), img.at(i, 1), 1.0),
                    j if j == cols - 1 => (img.at(i, j - 1), img.at(i, j), 1.0),
                    j => (img.at(i, j - 1), img.at(i, j + 1), 2.0),
                };
                gx[k] = (b - a) / d;
            } else {
                gx[k] = 0.0;
            }
            if rows > 1 {
                let (a, b, d) = match i {
                    0 => (img.at(0, j), img.at(1, j), 1.0),
                    i if i == rows - 1 => (img.at(i - 1, j), img.at(i, j), 1.0),
                    i => (img.at(i - 1, j), img.at(i + 1, j), 2.0),
                };
                gy[k] = (b - a) / d;
            } else {
                gy[k] = 0.0;
            }
        }
    }
    (gx, gy)
}

fn upsample_flow(coarse: &[f64], c_rows: usize, c_cols: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let y = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (c_rows - 1) as f64);
        for j in 0..cols {
            let x = ((j as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (c_cols - 1) as f64);
            out.push(2.0 * sample_bilinear(coarse, c_rows, c_cols, x, y));
        }
    }
    out
}

fn pair_flow(first: &Image, second: &Image, params: &LucasKanadeParams) -> Plane {
    let mut pyramid = vec![(first.clone(), second.clone())];
    for _ in 1..params.pyramid_levels.max(1) {
        let (a, b) = pyramid.last().unwrap();
        if a.rows / 2 < 2 * params.half_width.max(4) || a.cols / 2 < 2 * params.half_width.max(4) {
            break;
        }
        let next = (a.half(), b.half());
        pyramid.push(next);
    }
    let kernel = gaussian_kernel(params.half_width);

    let (mut u, mut v): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut ill = Vec::new();
    let mut prev_dims = (0, 0);
    for (level, (a, b)) in pyramid.iter().enumerate().rev() {
        let (rows, cols) = (a.rows, a.cols);
        if level == pyramid.len() - 1 {
            u = vec![0.0; rows * cols];
            v = vec![0.0; rows * cols];
        } else {
            u = upsample_flow(&u, prev_dims.0, prev_dims.1, rows, cols);
            v = upsample_flow(&v, prev_dims.0, prev_dims.1, rows, cols);
        }
        prev_dims = (rows, cols);
        let (ax, ay) = gradients(a);
        let support = blur(&vec![1.0; rows * cols], rows, cols, &kernel);
        for _ in 0..params.iterations.max(1) {
            ill = refine(a, b, &ax, &ay, &mut u, &mut v, &kernel, params);
            // Window-scale smoothing keeps the warp consistent with the
            // windowed updates; otherwise pixel-scale residue never decays.
            u = smooth(&u, &support, rows, cols, &kernel);
            v = smooth(&v, &support, rows, cols, &kernel);
        }
    }
    fill_ill_conditioned(&mut u, &mut v, &ill, first.rows, first.cols);
    Plane { u, v }
}

/// One Gauss–Newton step of windowed Lucas–Kanade; returns the ill-conditioning mask.
#[allow(clippy::too_many_arguments)]
fn refine(
    a: &Image,
    b: &Image,
    ax: &[f64],
    ay: &[f64],
    u: &mut [f64],
    v: &mut [f64],
    kernel: &[f64],
    params: &LucasKanadeParams,
) -> Vec<bool> {
    let (rows, cols) = (a.rows, a.cols);
    let warped = Image {
        rows,
        cols,
        data: (0..rows * cols)
            .map(|k| {
                let (i, j) = (k / cols, k % cols);
                sample_bilinear(&b.data, rows, cols, j as f64 + u[k], i as f64 + v[k])
            })
            .collect(),
    };
    let (bx, by) = gradients(&warped);

    let n = rows * cols;
    let mut valid = vec![0.0; n];
    let mut ixx = vec![0.0; n];
    let mut ixy = vec![0.0; n];
    let mut iyy = vec![0.0; n];
    let mut ixt = vec![0.0; n];
    let mut iyt = vec![0.0; n];
    for k in 0..n {
        let gx = 0.5 * (ax[k] + bx[k]);
        let gy = 0.5 * (ay[k] + by[k]);
        let gt = warped.data[k] - a.data[k];
        if gx.is_finite() && gy.is_finite() && gt.is_finite() {
            valid[k] = 1.0;
            ixx[k] = gx * gx;
            ixy[k] = gx * gy;
            iyy[k] = gy * gy;
            ixt[k] = gx * gt;
            iyt[k] = gy * gt;
        }
    }
    let w = blur(&valid, rows, cols, kernel);
    let sxx = blur(&ixx, rows, cols, kernel);
    let sxy = blur(&ixy, rows, cols, kernel);
    let syy = blur(&iyy, rows, cols, kernel);
    let sxt = blur(&ixt, rows, cols, kernel);
    let syt = blur(&iyt, rows, cols, kernel);

    let mut ill = vec![false; n];
    for k in 0..n {
        if w[k] < params.min_valid_fraction {
            ill[k] = true;
            continue;
        }
        let (xx, xy, yy) = (sxx[k] / w[k], sxy[k] / w[k], syy[k] / w[k]);
        let (xt, yt) = (sxt[k] / w[k], syt[k] / w[k]);
        let half_trace = 0.5 * (xx + yy);
        let disc = (0.25 * (xx - yy) * (xx - yy) + xy * xy).sqrt();
        let lambda_min = half_trace - disc;
        if !(lambda_min >= params.min_eigenvalue) {
            ill[k] = true;
            continue;
        }
        let det = xx * yy - xy * xy;
        let du = (-yy * xt + xy * yt) / det;
        let dv = (xy * xt - xx * yt) / det;
        u[k] += du;
        v[k] += dv;
    }
    ill
}

/// Replaces vectors of ill-conditioned windows by inverse-distance weighting of
/// well-conditioned ones; zero motion when no window is well-conditioned.
fn fill_ill_conditioned(u: &mut [f64], v: &mut [f64], ill: &[bool], rows: usize, cols: usize) {
    if !ill.iter().any(|&b| b) {
        return;
    }
    if ill.iter().all(|&b| b) {
        u.iter_mut().for_each(|x| *x = 0.0);
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let src_u = u.to_vec();
    let src_v = v.to_vec();
    let max_radius = rows.max(cols);
    let filled: Vec<(usize, f64, f64)> = (0..rows * cols)
        .into_par_iter()
        .filter(|&k| ill[k])
        .map(|k| {
            let (i, j) = ((k / cols) as i64, (k % cols) as i64);
            let mut radius = 4usize;
            loop {
                let stride = (radius / 4).max(1) as i64;
                let r = radius as i64;
                let (mut wsum, mut su, mut sv) = (0.0, 0.0, 0.0);
                let mut di = -r;
                while di <= r {
                    let ii = i + di;
                    if ii >= 0 && ii < rows as i64 {
                        let mut dj = -r;
                        while dj <= r {
                            let jj = j + dj;
                            if jj >= 0 && jj < cols as i64 {
                                let kk = ii as usize * cols + jj as usize;
                                if !ill[kk] {
                                    let w = 1.0 / (di * di + dj * dj) as f64;
                                    wsum += w;
                                    su += w * src_u[kk];
                                    sv += w * src_v[kk];
                                }
                            }
                            dj += stride;
                        }
                    }
                    di += stride;
                }
                if wsum > 0.0 {
                    return (k, su / wsum, sv / wsum);
                }
                if radius >= max_radius {
                    return (k, 0.0, 0.0);
                }
                radius *= 2;
            }
        })
        .collect();
    for (k, fu, fv) in filled {
        u[k] = fu;
        v[k] = fv;
    }
}

/// Backward semi-Lagrangian advection: each output pixel samples the input
/// `n_steps` displacements upstream. Upstream points outside the domain are NaN.
pub fn advect(field: &GridField, flow: &FlowField, n_steps: usize) -> Result<GridField> {
    if field.geometry != flow.geometry {
        return Err(Error::Dimension("field and flow geometries differ".into()));
    }
    let g = field.geometry;
    let (rows, cols) = (g.n_rows, g.n_cols);
    let src: Vec<f64> = field.values.iter().map(|&v| v as f64).collect();
    let steps = n_steps as f64;
    let mut values = vec![0.0f32; g.len()];
    values.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
        for (j, o) in out.iter_mut().enumerate() {
            let k = i * cols + j;
            let x = j as f64 - steps * flow.u[k] as f64;
            let y = i as f64 - steps * flow.v[k] as f64;
            *o = sample_bilinear(&src, rows, cols, x, y) as f32;
        }
    });
    Ok(GridField { geometry: g, timestamp: field.timestamp, kind: field.kind, values })
}

/// Spread of the global speed and direction perturbations of the vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationParams {
    /// Log-standard deviation of the speed factor.
    pub sigma_speed: f64,
    /// Standard deviation of the rotation, degrees.
    pub sigma_angle: f64,
    pub seed: u64,
}

impl Default for PerturbationParams {
    fn default() -> Self {
        Self { sigma_speed: 0.1, sigma_angle: 5.0, seed: 0 }
    }
}

impl PerturbationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_speed >= 0.0) || !(self.sigma_angle >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "perturbation spreads must be >= 0 (speed {}, angle {})",
                self.sigma_speed, self.sigma_angle
            )));
        }
        Ok(())
    }

    /// `(speed factor, rotation in degrees)` applied to `member`.
    pub fn draw(&self, member: usize) -> (f64, f64) {
        if member == 0 {
            return (1.0, 0.0);
        }
        let mut rng = keyed_rng(self.seed, Stream::FlowPerturbation, &[member as u64]);
        let z_speed: f64 = rng.sample(rand_distr::StandardNormal);
        let z_angle: f64 = rng.sample(rand_distr::StandardNormal);
        ((self.sigma_speed * z_speed).exp(), self.sigma_angle * z_angle)
    }
}

/// Scales every vector by one lognormal factor and rotates it by one normal
/// angle; member 0 is the unperturbed control.
pub fn perturb_flow(flow: &FlowField, params: &PerturbationParams, member: usize) -> FlowField {
    let (factor, angle) = params.draw(member);
    if factor == 1.0 && angle == 0.0 {
        return flow.clone();
    }
    let (s, c) = angle.to_radians().sin_cos();
    let mut out = flow.clone();
    for k in 0..flow.u.len() {
        let (u, v) = (flow.u[k] as f64, flow.v[k] as f64);
        out.u[k] = (factor * (u * c - v * s)) as f32;
        out.v[k] = (factor * (u * s + v * c)) as f32;
    }
    out
}
