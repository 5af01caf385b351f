//! Minibatch training of the regressor on a synthetic dataset.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::dataset::SyntheticDataset;
use super::regressor::{Forward, RegressorModel};
use super::schedule::{stream_rng, SubsampleSchedule};
use super::template::Template;
use crate::losses::{evaluate_query, loss_gradients, QueryEvaluation, RegimeConfig, TemplateGeometry};
use crate::{DeformationDelta, Error, Point, Result};

/// Stream offset separating batch draws from subsample draws.
const BATCH_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: u64,
    pub batch_size: usize,
    pub subsample: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            subsample: crate::LOSS_SUBSAMPLE,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub lambda0: f64,
    pub lambda_e: f64,
    pub lambda_r: f64,
    pub kappa_e: f64,
    pub kappa_r: f64,
    pub total: f64,
    /// Batch-mean floored weight per template.
    pub mean_weights: Vec<f64>,
    /// How often each template had the largest weight within the batch.
    pub selections: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RegressorModel,
    pub adam: AdamState,
    pub log: Vec<TrainRecord>,
}

/// Runs `options.steps` Adam steps on minibatches drawn from `subset`.
///
/// Training resumes from `adam` when given; its step count is the batch
/// index used for annealing and for the subsample schedule, so a resumed run
/// continues the original step numbering.
pub fn train_regressor(
    model: RegressorModel,
    adam: Option<AdamState>,
    dataset: &SyntheticDataset,
    subset: &[usize],
    templates: &[Template],
    regime: &RegimeConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    regime.validate()?;
    dataset.check_templates(templates)?;
    if model.feature_dim != dataset.feature_dim
        || model.templates != templates.len()
        || model.control_points != dataset.control_points
    {
        return Err(Error::DimensionMismatch(format!(
            "model (features {}, templates {}, control points {}) does not fit dataset (features {}, templates {}, control points {})",
            model.feature_dim,
            model.templates,
            model.control_points,
            dataset.feature_dim,
            templates.len(),
            dataset.control_points
        )));
    }
    if subset.is_empty() || options.batch_size == 0 {
        return Err(Error::InvalidArgument("need a non-empty training subset and batch size".into()));
    }
    let mut adam = adam.unwrap_or_else(|| AdamState::new(model.param_count(), options.adam));
    if adam.m.len() != model.param_count() {
        return Err(Error::DimensionMismatch("optimizer state does not match model".into()));
    }
    let mut model = model;
    let schedule = SubsampleSchedule::new(options.seed, options.subsample);
    let truths: Vec<DeformationDelta> =
        dataset.records.iter().map(|r| r.delta()).collect::<Result<_>>()?;
    let mut log = Vec::with_capacity(options.steps as usize);

    for _ in 0..options.steps {
        let step = adam.step;
        let batch_size = options.batch_size.min(subset.len());
        let picks = index::sample(&mut stream_rng(options.seed, BATCH_STREAM + step), subset.len(), batch_size);
        let batch: Vec<usize> = picks.iter().map(|k| subset[k]).collect();

        let bases: Vec<_> = templates
            .iter()
            .map(|t| t.sample_basis.select_rows(&schedule.indices(t.samples.len(), step)))
            .collect();
        let geometry: Vec<TemplateGeometry> = templates.iter().zip(&bases).map(|(t, b)| t.geometry(b)).collect();

        let evaluated: Vec<(Forward, Vec<Point>, QueryEvaluation)> = batch
            .par_iter()
            .map(|&r| {
                let record = &dataset.records[r];
                let forward = model.forward(&record.feature)?;
                let target = crate::losses::deformed_points(&geometry[record.template], &truths[r])?;
                let deltas = (0..templates.len()).map(|t| forward.delta(t)).collect::<Result<Vec<_>>>()?;
                let eval = evaluate_query(&geometry, &target, forward.logits(), deltas)?;
                Ok((forward, target, eval))
            })
            .collect::<Result<_>>()?;

        let evals: Vec<QueryEvaluation> = evaluated.iter().map(|e| e.2.clone()).collect();
        let targets: Vec<&[Point]> = evaluated.iter().map(|e| e.1.as_slice()).collect();
        let geometries = vec![geometry.clone(); evals.len()];
        let (breakdown, grads) = loss_gradients(&evals, &geometries, &targets, regime, step)
            .map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("training diverged at step {step}: {msg}")),
                other => other,
            })?;

        let mut grad = vec![0.0; model.param_count()];
        for ((&r, (forward, _, _)), g) in batch.iter().zip(&evaluated).zip(&grads) {
            let head_grads: Vec<Vec<f64>> = g
                .deltas
                .iter()
                .zip(&g.logits)
                .map(|(d, &z)| d.iter().flat_map(|v| [v.x, v.y, v.z]).chain(std::iter::once(z)).collect())
                .collect();
            model.accumulate_gradient(&dataset.records[r].feature, forward, &head_grads, &mut grad);
        }
        adam.update(&mut model.params, &grad)?;

        let mut selections = vec![0; templates.len()];
        for w in &breakdown.weights {
            selections[w.argmax()] += 1;
        }
        log.push(TrainRecord {
            step,
            lambda0: breakdown.lambda0,
            lambda_e: breakdown.lambda_e,
            lambda_r: breakdown.lambda_r,
            kappa_e: breakdown.kappa_e,
            kappa_r: breakdown.kappa_r,
            total: breakdown.total,
            mean_weights: breakdown.mean_weights,
            selections,
        });
    }
    Ok(TrainOutcome { model, adam, log })
}

/// Serializes log records as JSON lines.
pub fn log_to_jsonl(log: &[TrainRecord]) -> String {
    let mut out = String::new();
    for record in log {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parses JSON-lines training logs; blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<TrainRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
