//! Ensemble nowcasters built on the cascade, plus the advection-only and
//! persistence baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fill_with_mean, fit_ar2_levels, recompose_levels, Cascade, FilterBank, NoiseGenerator, DEFAULT_LEVELS};
use crate::error::{Error, Result};
use crate::flow::{advect, estimate_flow, perturb_flow, FlowField, PerturbationParams};
use crate::forecast::ForecastSet;
use crate::grid::{FieldSequence, GridField};

pub const MODEL_SOLARSTEPS: &str = "solarsteps";
pub const MODEL_SOLARSTEPS_PA: &str = "solarsteps-pa";
pub const MODEL_PERSISTENCE: &str = "persistence";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NowcastConfig {
    pub n_levels: usize,
    /// Only order 2 is supported.
    pub ar_order: usize,
    pub n_members: usize,
    pub n_leads: usize,
    pub csi_clip: [f64; 2],
    pub seed: u64,
    /// Multiplier on the innovation standard deviation; 0 disables noise.
    pub noise_scale: f64,
    /// Clip the recombined field before advecting it instead of after.
    pub clip_before_advection: bool,
}

impl Default for NowcastConfig {
    fn default() -> Self {
        Self {
            n_levels: DEFAULT_LEVELS,
            ar_order: 2,
            n_members: 10,
            n_leads: 8,
            csi_clip: [0.0, 1.4],
            seed: 0,
            noise_scale: 1.0,
            clip_before_advection: false,
        }
    }
}

impl NowcastConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_levels == 0 || self.n_members == 0 || self.n_leads == 0 {
            return bad(format!(
                "n_levels, n_members and n_leads must be >= 1 (got {}, {}, {})",
                self.n_levels, self.n_members, self.n_leads
            ));
        }
        if self.ar_order != 2 {
            return bad(format!("only AR order 2 is supported, got {}", self.ar_order));
        }
        if !(self.csi_clip[0] < self.csi_clip[1]) {
            return bad(format!("empty clip range {:?}", self.csi_clip));
        }
        if !(self.noise_scale >= 0.0) {
            return bad(format!("noise_scale must be >= 0, got {}", self.noise_scale));
        }
        Ok(())
    }
}

fn clip(values: &mut [f64], [lo, hi]: [f64; 2]) {
    for v in values.iter_mut().filter(|v| !v.is_nan()) {
        *v = v.clamp(lo, hi);
    }
}

fn to_field(template: &GridField, values: Vec<f64>) -> GridField {
    GridField {
        geometry: template.geometry,
        timestamp: template.timestamp,
        kind: template.kind,
        values: values.into_iter().map(|v| v as f32).collect(),
    }
}

/// Cascade/AR(2) ensemble: each level evolves in the frame of the last input
/// field, the levels are recombined, then advected `lead` steps.
pub fn solarsteps_forecast(input: &FieldSequence, config: &NowcastConfig) -> Result<ForecastSet> {
    config.validate()?;
    let n = input.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("cascade nowcast needs >= 3 input fields, got {n}")));
    }
    let flow = estimate_flow(input)?;
    let last = input.last();
    let g = input.geometry();

    // Co-register the history in the frame of the last field.
    let coregistered = input
        .fields()
        .iter()
        .enumerate()
        .map(|(k, f)| advect(f, &flow, n - 1 - k))
        .collect::<Result<Vec<_>>>()?;
    let valid: Vec<bool> = (0..g.len()).map(|p| coregistered.iter().all(|f| !f.values[p].is_nan())).collect();
    let bank = FilterBank::new(g.n_rows, g.n_cols, config.n_levels)?;
    // Gaps in the older fields take the last field's value so that they do
    // not inject spurious differences between time steps into the spectra.
    let anchor_filled = fill_with_mean(last)?;
    let filled: Vec<Vec<f64>> = coregistered
        .iter()
        .map(|f| {
            f.values
                .iter()
                .zip(&anchor_filled)
                .map(|(&v, &a)| if v.is_nan() { a } else { v as f64 })
                .collect()
        })
        .collect();
    let cascades = filled.iter().map(|f| bank.decompose(f)).collect::<Result<Vec<Cascade>>>()?;
    let ar = fit_ar2_levels(&cascades, Some(&valid))?;
    let noise = (config.noise_scale > 0.0).then(|| NoiseGenerator::new(&filled[n - 1], g.n_rows, g.n_cols));

    let anchor = &cascades[n - 1];
    let step = input.step();
    let gaps = (1..=config.n_leads)
        .map(|l| advect(last, &flow, l).map(|f| f.values.iter().map(|v| v.is_nan()).collect::<Vec<bool>>()))
        .collect::<Result<Vec<_>>>()?;

    let members: Vec<Vec<GridField>> = (0..config.n_members)
        .into_par_iter()
        .map(|member| -> Result<Vec<GridField>> {
            let mut current = anchor.levels.clone();
            let mut previous = cascades[n - 2].levels.clone();
            let mut out = Vec::with_capacity(config.n_leads);
            for lead in 1..=config.n_leads {
                let eps = noise.as_ref().map(|gen| gen.draw_levels(&bank, config.seed, member, lead));
                let next: Vec<Vec<f64>> = (0..current.len())
                    .map(|k| {
                        let coeff = &ar[k];
                        (0..current[k].len())
                            .map(|p| {
                                let e = eps.as_ref().map_or(0.0, |c| config.noise_scale * c.levels[k][p]);
                                coeff.step(current[k][p], previous[k][p], e)
                            })
                            .collect()
                    })
                    .collect();
                previous = std::mem::replace(&mut current, next);

                let mut values = recompose_levels(&current, &anchor.level_means, &anchor.level_stds);
                if config.clip_before_advection {
                    clip(&mut values, config.csi_clip);
                }
                let mut field = advect(&to_field(last, values), &flow, lead)?;
                if !config.clip_before_advection {
                    field.values.iter_mut().filter(|v| !v.is_nan()).for_each(|v| {
                        *v = (*v as f64).clamp(config.csi_clip[0], config.csi_clip[1]) as f32;
                    });
                }
                for (v, &gap) in field.values.iter_mut().zip(&gaps[lead - 1]) {
                    if gap {
                        *v = f32::NAN;
                    }
                }
                field.timestamp = last.timestamp + step * lead as i32;
                out.push(field);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    ForecastSet::new(MODEL_SOLARSTEPS, last.timestamp, step, config.seed, transpose(members))
}

/// `[member][lead]` to `[lead][member]`.
fn transpose(members: Vec<Vec<GridField>>) -> Vec<Vec<GridField>> {
    let n_leads = members.first().map_or(0, Vec::len);
    let mut leads: Vec<Vec<GridField>> = (0..n_leads).map(|_| Vec::with_capacity(members.len())).collect();
    for member in members {
        for (l, f) in member.into_iter().enumerate() {
            leads[l].push(f);
        }
    }
    leads
}

/// Advection-only ensemble: member `e` advects the last field with the
/// flow perturbed for `e`.
pub fn solarsteps_pa_forecast(
    input: &FieldSequence,
    config: &NowcastConfig,
    perturbation: &PerturbationParams,
) -> Result<ForecastSet> {
    config.validate()?;
    perturbation.validate()?;
    let flow = estimate_flow(input)?;
    advection_ensemble(input, &flow, config, perturbation)
}

/// Advection ensemble driven by a given flow.
pub fn advection_ensemble(
    input: &FieldSequence,
    flow: &FlowField,
    config: &NowcastConfig,
    perturbation: &PerturbationParams,
) -> Result<ForecastSet> {
    let last = input.last();
    let step = input.step();
    let members: Vec<Vec<GridField>> = (0..config.n_members)
        .into_par_iter()
        .map(|member| -> Result<Vec<GridField>> {
            let member_flow = perturb_flow(flow, perturbation, member);
            (1..=config.n_leads)
                .map(|lead| {
                    let mut f = advect(last, &member_flow, lead)?;
                    f.timestamp = last.timestamp + step * lead as i32;
                    Ok(f)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    ForecastSet::new(MODEL_SOLARSTEPS_PA, last.timestamp, step, perturbation.seed, transpose(members))
}

/// Single-member forecast repeating the last field at every lead.
pub fn persistence_forecast(input: &FieldSequence, n_leads: usize) -> Result<ForecastSet> {
    if input.is_empty() {
        return Err(Error::InsufficientData("persistence needs one input field".into()));
    }
    if n_leads == 0 {
        return Err(Error::InvalidParameter("n_leads must be >= 1".into()));
    }
    let last = input.last();
    let step = input.step();
    let fields = (1..=n_leads)
        .map(|lead| {
            let mut f = last.clone();
            f.timestamp = last.timestamp + step * lead as i32;
            vec![f]
        })
        .collect();
    ForecastSet::new(MODEL_PERSISTENCE, last.timestamp, step, 0, fields)
}
