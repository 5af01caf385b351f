//! Direct per-target optimization of deformations (and, for several
//! templates, selection logits) with Adam.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::schedule::SubsampleSchedule;
use super::template::Template;
use crate::losses::{
    evaluate_query, floor_weights, loss_gradients, RegimeConfig, RegimeId, TemplateGeometry, TemplateWeights,
    Weighting,
};
use crate::{DeformationDelta, Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub steps: u64,
    pub adam: AdamConfig,
    /// Points drawn from each cloud per step.
    pub subsample: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { steps: 2000, adam: AdamConfig::default(), subsample: crate::LOSS_SUBSAMPLE, seed: 0 }
    }
}

/// Loss values at one step, evaluated before that step's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: u64,
    pub lambda0: f64,
    pub lambda_e: f64,
    pub lambda_r: f64,
    pub total: f64,
    pub chamfer: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleFit {
    pub delta: DeformationDelta,
    /// `steps + 1` entries; the last one is evaluated after the final update.
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiFit {
    pub deltas: Vec<DeformationDelta>,
    pub weights: TemplateWeights,
    /// Index of the largest weight (lowest index on ties).
    pub selected: usize,
    pub trace: Vec<TraceEntry>,
}

/// Regime used by [`fit_single`]: plain Chamfer plus an optional annealed
/// `kappa_r0 |dP|^2` term.
pub fn single_regime(kappa_r0: f64, b0: u64) -> RegimeConfig {
    RegimeConfig {
        id: RegimeId::Custom,
        epsilon_gamma: 0.1,
        weighting: Weighting::Identity,
        kappa_e0: 0.0,
        kappa_r0,
        b0,
        b_max: crate::losses::DEFAULT_B_MAX,
    }
}

/// Fits one template's deformation to `target` by Adam on the Chamfer
/// distance between fresh subsamples of both clouds at every step.
pub fn fit_single(
    template: &Template,
    target: &PointCloud,
    options: &FitOptions,
    kappa_r0: f64,
    b0: u64,
) -> Result<SingleFit> {
    let fit = optimize(&[template], target, &single_regime(kappa_r0, b0), options)?;
    Ok(SingleFit { delta: fit.deltas.into_iter().next().expect("one template"), trace: fit.trace })
}

/// Jointly fits every template's deformation and the selection logits under
/// `regime`, then selects the template with the largest weight.
pub fn fit_multi(
    templates: &[&Template],
    target: &PointCloud,
    regime: &RegimeConfig,
    options: &FitOptions,
) -> Result<MultiFit> {
    regime.validate()?;
    optimize(templates, target, regime, options)
}

fn optimize(
    templates: &[&Template],
    target: &PointCloud,
    regime: &RegimeConfig,
    options: &FitOptions,
) -> Result<MultiFit> {
    if templates.is_empty() {
        return Err(Error::InvalidArgument("need at least one template".into()));
    }
    if target.is_empty() {
        return Err(Error::InvalidArgument("target cloud is empty".into()));
    }
    let t_count = templates.len();
    let sizes: Vec<usize> = templates.iter().map(|t| t.control_count() * 3).collect();
    let total_params: usize = sizes.iter().sum::<usize>() + t_count;
    let mut params = vec![0.0; total_params];
    let mut adam = AdamState::new(total_params, options.adam);
    let schedule = SubsampleSchedule::new(options.seed, options.subsample);
    let mut trace = Vec::with_capacity(options.steps as usize + 1);

    let unpack = |params: &[f64]| -> Result<(Vec<DeformationDelta>, Vec<f64>)> {
        let mut deltas = Vec::with_capacity(t_count);
        let mut offset = 0;
        for &n in &sizes {
            deltas.push(DeformationDelta::from_flat(&params[offset..offset + n])?);
            offset += n;
        }
        Ok((deltas, params[offset..].to_vec()))
    };

    for step in 0..=options.steps {
        let bases: Vec<_> = templates
            .iter()
            .map(|t| t.sample_basis.select_rows(&schedule.indices(t.samples.len(), step)))
            .collect();
        let geometry: Vec<TemplateGeometry> =
            templates.iter().zip(&bases).map(|(t, b)| t.geometry(b)).collect();
        let target_sub: Vec<_> =
            schedule.indices(target.len(), step).iter().map(|&i| target.points()[i]).collect();
        let (deltas, logits) = unpack(&params)?;
        let eval = evaluate_query(&geometry, &target_sub, logits, deltas)?;
        let (breakdown, grads) = loss_gradients(
            std::slice::from_ref(&eval),
            std::slice::from_ref(&geometry),
            &[&target_sub],
            regime,
            step,
        )
        .map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("fit diverged at step {step}: {msg}")),
            other => other,
        })?;
        trace.push(TraceEntry {
            step,
            lambda0: breakdown.lambda0,
            lambda_e: breakdown.lambda_e,
            lambda_r: breakdown.lambda_r,
            total: breakdown.total,
            chamfer: breakdown.per_template_chamfer[0].clone(),
            weights: breakdown.weights[0].floored.clone(),
        });
        if step == options.steps {
            break;
        }
        let grad = &grads[0];
        let mut flat = Vec::with_capacity(total_params);
        for d in &grad.deltas {
            flat.extend(d.iter().flat_map(|v| [v.x, v.y, v.z]));
        }
        flat.extend_from_slice(&grad.logits);
        adam.update(&mut params, &flat)?;
    }

    let (deltas, logits) = unpack(&params)?;
    let weights = floor_weights(&logits, regime.epsilon_gamma)?;
    let selected = weights.argmax();
    Ok(MultiFit { deltas, weights, selected, trace })
}
