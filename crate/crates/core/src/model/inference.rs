//! Inference with a trained regressor and template-selection statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::SyntheticDataset;
use super::regressor::RegressorModel;
use super::schedule::SubsampleSchedule;
use super::template::Template;
use crate::losses::{deformed_points, floor_weights, TemplateWeights};
use crate::metrics::chamfer;
use crate::{DeformationDelta, Error, Mesh, PointCloud, Result};

#[derive(Debug, Clone)]
pub struct Inference {
    pub selected: usize,
    pub weights: TemplateWeights,
    pub delta: DeformationDelta,
    /// Selected template mesh with its vertices deformed.
    pub mesh: Mesh,
    /// Selected template samples deformed, labels carried along.
    pub cloud: PointCloud,
}

/// Runs every head, selects the template with the largest floored weight
/// (lowest index on ties) and deforms it.
pub fn infer(model: &RegressorModel, feature: &[f64], templates: &[Template], epsilon_gamma: f64) -> Result<Inference> {
    if model.templates != templates.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} heads for {} templates",
            model.templates,
            templates.len()
        )));
    }
    let forward = model.forward(feature)?;
    let weights = floor_weights(&forward.logits(), epsilon_gamma)?;
    let selected = weights.argmax();
    let delta = forward.delta(selected)?;
    let template = &templates[selected];
    Ok(Inference {
        selected,
        mesh: template.deform_mesh(&delta)?,
        cloud: template.deform_samples(&delta)?,
        weights,
        delta,
    })
}

/// Selection and error of one evaluated query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub truth: usize,
    pub selected: usize,
    /// Chamfer distance from the deformed selected template to the target.
    pub deformed_chamfer: f64,
    /// Chamfer distance from the undeformed selected template to the target.
    pub undeformed_chamfer: f64,
}

/// Runs inference on `subset` of the dataset and measures each selection on
/// a fixed subsample (same indices for target and template samples).
pub fn evaluate_selections(
    model: &RegressorModel,
    dataset: &SyntheticDataset,
    subset: &[usize],
    templates: &[Template],
    epsilon_gamma: f64,
    subsample: usize,
    seed: u64,
) -> Result<Vec<SelectionOutcome>> {
    dataset.check_templates(templates)?;
    let schedule = SubsampleSchedule::new(seed, subsample);
    let bases: Vec<_> = templates
        .iter()
        .map(|t| t.sample_basis.select_rows(&schedule.indices(t.samples.len(), 0)))
        .collect();
    subset
        .par_iter()
        .map(|&r| {
            let record = &dataset.records[r];
            let forward = model.forward(&record.feature)?;
            let weights = floor_weights(&forward.logits(), epsilon_gamma)?;
            let s = weights.argmax();
            let truth = &templates[record.template];
            let target = deformed_points(&truth.geometry(&bases[record.template]), &record.delta()?)?;
            let chosen = templates[s].geometry(&bases[s]);
            let deformed = deformed_points(&chosen, &forward.delta(s)?)?;
            let rest = deformed_points(&chosen, &DeformationDelta::zeros(templates[s].control_count()))?;
            Ok(SelectionOutcome {
                truth: record.template,
                selected: s,
                deformed_chamfer: chamfer(&deformed, &target)?,
                undeformed_chamfer: chamfer(&rest, &target)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    /// Selection count per template index.
    pub counts: Vec<usize>,
    /// Normalized counts sorted in descending order.
    pub histogram: Vec<f64>,
    /// Shannon entropy (natural log) of the normalized counts.
    pub entropy: f64,
    /// `(chamfer, fraction of queries with error <= chamfer)`, ascending.
    pub deformed_cdf: Vec<(f64, f64)>,
    pub undeformed_cdf: Vec<(f64, f64)>,
    pub mean_deformed_chamfer: f64,
    pub mean_undeformed_chamfer: f64,
    /// Fraction of queries whose selection equals the generating template.
    pub accuracy: f64,
}

/// Histogram of selections over `templates` slots plus cumulative Chamfer
/// curves for deformed and undeformed selected templates.
pub fn selection_stats(outcomes: &[SelectionOutcome], templates: usize) -> Result<SelectionStats> {
    if outcomes.is_empty() || templates == 0 {
        return Err(Error::InvalidArgument("selection statistics need at least one outcome".into()));
    }
    let mut counts = vec![0usize; templates];
    for o in outcomes {
        if o.selected >= templates {
            return Err(Error::DimensionMismatch(format!("selection {} out of {templates} templates", o.selected)));
        }
        counts[o.selected] += 1;
    }
    let n = outcomes.len() as f64;
    let mut histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    histogram.sort_by(|a, b| b.total_cmp(a));
    let entropy = -histogram.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    let cdf = |values: Vec<f64>| {
        let mut v = values;
        v.sort_by(f64::total_cmp);
        v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect::<Vec<_>>()
    };
    let deformed: Vec<f64> = outcomes.iter().map(|o| o.deformed_chamfer).collect();
    let undeformed: Vec<f64> = outcomes.iter().map(|o| o.undeformed_chamfer).collect();
    Ok(SelectionStats {
        counts,
        histogram,
        entropy,
        mean_deformed_chamfer: deformed.iter().sum::<f64>() / n,
        mean_undeformed_chamfer: undeformed.iter().sum::<f64>() / n,
        deformed_cdf: cdf(deformed),
        undeformed_cdf: cdf(undeformed),
        accuracy: outcomes.iter().filter(|o| o.truth == o.selected).count() as f64 / n,
    })
}

/// Selection counts summed over training-log records.
pub fn selections_from_log(log: &[super::train::TrainRecord]) -> Result<Vec<usize>> {
    let Some(first) = log.first() else {
        return Err(Error::InvalidArgument("empty training log".into()));
    };
    let mut counts = vec![0usize; first.selections.len()];
    for record in log {
        if record.selections.len() != counts.len() {
            return Err(Error::DimensionMismatch(format!("log record {} has a different template count", record.step)));
        }
        for (c, s) in counts.iter_mut().zip(&record.selections) {
            *c += s;
        }
    }
    Ok(counts)
}

/// Normalized counts sorted in descending order, and their Shannon entropy.
pub fn sorted_histogram(counts: &[usize]) -> (Vec<f64>, f64) {
    let total: usize = counts.iter().sum();
    let mut h: Vec<f64> = counts.iter().map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 }).collect();
    h.sort_by(|a, b| b.total_cmp(a));
    let entropy = -h.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    (h, entropy)
}
