//! Multi-template training objective: floored softmax weights, weighting
//! functions, the weighted Chamfer loss, the batch entropy penalty, the
//! deformation regularizer, exponential annealing, and hand-derived
//! gradients of the combined loss.
//!
//! For a batch of `Q` queries and `T` templates the loss is
//!
//! ```text
//! total = sum_q sum_t f(g_qt) c_qt                 (weighted Chamfer)
//!       + k_e * sum_t gbar_t ln gbar_t             (gbar = batch mean of g)
//!       + k_r * sum_q sum_t g_qt |dP_qt|^2         (regularizer)
//! ```
//!
//! where `g_q = (1 - eps) softmax(z_q) + eps / T` and `c_qt` is the summed
//! Chamfer distance between the deformed template samples and the target.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ffd::DeformationDelta;
use crate::metrics::{chamfer_matches, ChamferMatches};
use crate::{DeformationMatrix, Error, Point, Result, Vector};

/// Batch reduction used by [`total_loss`], recorded in training logs.
pub const BATCH_REDUCTION: &str =
    "weighted chamfer and regularizer summed over queries; entropy on batch-mean floored weights";

/// Softmax weights blended with the uniform distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateWeights {
    pub logits: Vec<f64>,
    /// Plain softmax of the logits.
    pub softmax: Vec<f64>,
    pub floored: Vec<f64>,
    pub epsilon: f64,
}

impl TemplateWeights {
    pub fn len(&self) -> usize {
        self.floored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.floored.is_empty()
    }

    /// Index of the largest floored weight; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.floored)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `g = (1 - eps) softmax(logits) + eps / T`, computed as
/// `s + eps (1/T - s)` so uniform logits give exactly `1/T`.
pub fn floor_weights(logits: &[f64], epsilon: f64) -> Result<TemplateWeights> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("need at least one template logit".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!("weight floor must be in (0, 1], got {epsilon}")));
    }
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFinite(format!("logit {i} = {}", logits[i])));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let softmax: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let uniform = 1.0 / logits.len() as f64;
    let floored = softmax.iter().map(|s| s + epsilon * (uniform - s)).collect();
    Ok(TemplateWeights { logits: logits.to_vec(), softmax, floored, epsilon })
}

/// The function `f` applied to a weight inside the weighted Chamfer loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `f(g) = g`
    Identity,
    /// `f(g) = -ln(1 - g)`
    LogBarrier,
}

pub fn weighting_fn(gamma: f64, kind: Weighting) -> Result<f64> {
    match kind {
        Weighting::Identity => Ok(gamma),
        Weighting::LogBarrier => {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::InvalidArgument(format!(
                    "log barrier weighting is defined on [0, 1), got {gamma}"
                )));
            }
            Ok(-(-gamma).ln_1p())
        }
    }
}

fn weighting_derivative(gamma: f64, kind: Weighting) -> f64 {
    match kind {
        Weighting::Identity => 1.0,
        Weighting::LogBarrier => 1.0 / (1.0 - gamma),
    }
}

/// `sum_t f(g_t) c_t` for one query.
pub fn weighted_chamfer_loss(per_template: &[f64], weights: &TemplateWeights, kind: Weighting) -> Result<f64> {
    if per_template.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} chamfer values for {} weights",
            per_template.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for (c, &g) in per_template.iter().zip(&weights.floored) {
        total += weighting_fn(g, kind)? * c;
    }
    Ok(total)
}

/// Column means of a `Q x T` weight matrix.
pub fn batch_mean_weights<R: AsRef<[f64]>>(rows: &[R]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut mean = vec![0.0; first.as_ref().len()];
    for row in rows {
        for (m, w) in mean.iter_mut().zip(row.as_ref()) {
            *m += w;
        }
    }
    let q = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= q);
    mean
}

/// `sum_t gbar_t ln gbar_t` over the batch-mean weights (negative entropy,
/// minimal at the uniform distribution). `0 ln 0` counts as 0.
pub fn entropy_penalty<R: AsRef<[f64]>>(rows: &[R]) -> f64 {
    batch_mean_weights(rows)
        .iter()
        .map(|&g| if g > 0.0 { g * g.ln() } else { 0.0 })
        .sum()
}

/// `sum_t g_t |dP_t|^2` for one query.
pub fn deformation_regularizer(deltas: &[DeformationDelta], weights: &TemplateWeights) -> Result<f64> {
    if deltas.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} deltas for {} weights",
            deltas.len(),
            weights.len()
        )));
    }
    Ok(deltas.iter().zip(&weights.floored).map(|(d, g)| g * d.squared_norm()).sum())
}

/// `kappa0 * exp(-b / b0)`.
pub fn anneal(kappa0: f64, batch_index: u64, b0: u64) -> f64 {
    kappa0 * (-(batch_index as f64) / b0 as f64).exp()
}

/// Named training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeId {
    /// base
    B,
    /// log-weighted
    W,
    /// entropy penalty
    E,
    /// deformation regularization
    R,
    /// any other combination
    Custom,
}

impl RegimeId {
    pub const NAMED: [RegimeId; 4] = [RegimeId::B, RegimeId::W, RegimeId::E, RegimeId::R];
}

impl fmt::Display for RegimeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeId::B => "b",
            RegimeId::W => "w",
            RegimeId::E => "e",
            RegimeId::R => "r",
            RegimeId::Custom => "custom",
        })
    }
}

impl FromStr for RegimeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" | "base" => Ok(RegimeId::B),
            "w" | "log-weighted" => Ok(RegimeId::W),
            "e" | "entropy" => Ok(RegimeId::E),
            "r" | "regularized" => Ok(RegimeId::R),
            "custom" => Ok(RegimeId::Custom),
            other => Err(Error::InvalidArgument(format!("unknown regime '{other}'"))),
        }
    }
}

/// Default annealing scale.
pub const DEFAULT_B0: u64 = 10_000;
/// Default number of training steps for a full-length run.
pub const DEFAULT_B_MAX: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeConfig {
    pub id: RegimeId,
    pub epsilon_gamma: f64,
    pub weighting: Weighting,
    pub kappa_e0: f64,
    pub kappa_r0: f64,
    pub b0: u64,
    pub b_max: u64,
}

impl RegimeConfig {
    pub fn preset(id: RegimeId) -> Result<Self> {
        let (epsilon_gamma, weighting, kappa_e0, kappa_r0) = match id {
            RegimeId::B => (0.1, Weighting::Identity, 0.0, 0.0),
            RegimeId::W => (0.001, Weighting::LogBarrier, 0.0, 0.0),
            RegimeId::E => (0.1, Weighting::Identity, 100.0, 0.0),
            RegimeId::R => (0.1, Weighting::Identity, 0.0, 1.0),
            RegimeId::Custom => {
                return Err(Error::InvalidArgument("custom regimes have no preset".into()))
            }
        };
        Ok(Self { id, epsilon_gamma, weighting, kappa_e0, kappa_r0, b0: DEFAULT_B0, b_max: DEFAULT_B_MAX })
    }

    pub fn named(name: &str) -> Result<Self> {
        Self::preset(name.parse()?)
    }

    /// Checks ranges, and that a named regime carries its preset values.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_gamma > 0.0 && self.epsilon_gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_gamma must be in (0, 1), got {}",
                self.epsilon_gamma
            )));
        }
        if !(self.kappa_e0 >= 0.0 && self.kappa_r0 >= 0.0) {
            return Err(Error::InvalidArgument("kappa values must be non-negative".into()));
        }
        if self.b0 == 0 || self.b_max == 0 {
            return Err(Error::InvalidArgument("b0 and b_max must be positive".into()));
        }
        if self.id != RegimeId::Custom {
            let p = Self::preset(self.id)?;
            if (p.epsilon_gamma, p.weighting, p.kappa_e0, p.kappa_r0)
                != (self.epsilon_gamma, self.weighting, self.kappa_e0, self.kappa_r0)
            {
                return Err(Error::InvalidArgument(format!(
                    "regime '{}' fields differ from its preset; use id \"custom\"",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn kappa_e(&self, batch_index: u64) -> f64 {
        anneal(self.kappa_e0, batch_index, self.b0)
    }

    pub fn kappa_r(&self, batch_index: u64) -> f64 {
        anneal(self.kappa_r0, batch_index, self.b0)
    }
}

/// Loss inputs for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTerms {
    pub logits: Vec<f64>,
    pub deltas: Vec<DeformationDelta>,
    /// Summed Chamfer distance per template.
    pub chamfer: Vec<f64>,
}

impl AsRef<QueryTerms> for QueryTerms {
    fn as_ref(&self) -> &QueryTerms {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub lambda0: f64,
    pub lambda_e: f64,
    pub lambda_r: f64,
    pub kappa_e: f64,
    pub kappa_r: f64,
    pub total: f64,
    /// `Q x T` Chamfer values.
    pub per_template_chamfer: Vec<Vec<f64>>,
    /// Floored weights per query.
    pub weights: Vec<TemplateWeights>,
    /// Column means of the floored weights.
    pub mean_weights: Vec<f64>,
}

/// Assembles the regime's loss for a batch at step `batch_index`.
pub fn total_loss<Q: AsRef<QueryTerms>>(
    batch: &[Q],
    config: &RegimeConfig,
    batch_index: u64,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let t = batch[0].as_ref().logits.len();
    let mut weights = Vec::with_capacity(batch.len());
    let mut lambda0 = 0.0;
    let mut lambda_r = 0.0;
    for query in batch {
        let query = query.as_ref();
        if query.logits.len() != t || query.chamfer.len() != t || query.deltas.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "every query needs {t} logits, chamfer values and deltas"
            )));
        }
        let w = floor_weights(&query.logits, config.epsilon_gamma)?;
        lambda0 += weighted_chamfer_loss(&query.chamfer, &w, config.weighting)?;
        lambda_r += deformation_regularizer(&query.deltas, &w)?;
        weights.push(w);
    }
    let rows: Vec<&[f64]> = weights.iter().map(|w| w.floored.as_slice()).collect();
    let lambda_e = entropy_penalty(&rows);
    let mean_weights = batch_mean_weights(&rows);
    let kappa_e = config.kappa_e(batch_index);
    let kappa_r = config.kappa_r(batch_index);
    let total = lambda0 + kappa_e * lambda_e + kappa_r * lambda_r;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss at step {batch_index}: lambda0={lambda0} lambda_e={lambda_e} lambda_r={lambda_r}"
        )));
    }
    Ok(LossBreakdown {
        lambda0,
        lambda_e,
        lambda_r,
        kappa_e,
        kappa_r,
        total,
        per_template_chamfer: batch.iter().map(|q| q.as_ref().chamfer.clone()).collect(),
        weights,
        mean_weights,
    })
}

/// Geometry of one template as seen by the loss: the (possibly row-subsampled)
/// deformation matrix and the rest control points.
#[derive(Debug, Clone, Copy)]
pub struct TemplateGeometry<'a> {
    pub basis: &'a DeformationMatrix,
    pub control_points: &'a [Point],
}

/// Deformed clouds, Chamfer correspondences and loss terms of one query.
#[derive(Debug, Clone)]
pub struct QueryEvaluation {
    pub terms: QueryTerms,
    pub deformed: Vec<Vec<Point>>,
    pub matches: Vec<ChamferMatches>,
}

impl AsRef<QueryTerms> for QueryEvaluation {
    fn as_ref(&self) -> &QueryTerms {
        &self.terms
    }
}

/// `B (P + dP)`.
pub fn deformed_points(geometry: &TemplateGeometry<'_>, delta: &DeformationDelta) -> Result<Vec<Point>> {
    if delta.len() != geometry.control_points.len() {
        return Err(Error::DimensionMismatch(format!(
            "delta has {} rows for {} control points",
            delta.len(),
            geometry.control_points.len()
        )));
    }
    let moved: Vec<Point> = geometry
        .control_points
        .iter()
        .zip(delta.values())
        .map(|(p, d)| p + d)
        .collect();
    geometry.basis.multiply(&moved)
}

/// Deforms every template of one query and matches it against `target`.
pub fn evaluate_query(
    templates: &[TemplateGeometry<'_>],
    target: &[Point],
    logits: Vec<f64>,
    deltas: Vec<DeformationDelta>,
) -> Result<QueryEvaluation> {
    if templates.len() != deltas.len() || templates.len() != logits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} templates, {} deltas, {} logits",
            templates.len(),
            deltas.len(),
            logits.len()
        )));
    }
    let mut deformed = Vec::with_capacity(templates.len());
    let mut matches = Vec::with_capacity(templates.len());
    let mut chamfer = Vec::with_capacity(templates.len());
    for (geometry, delta) in templates.iter().zip(&deltas) {
        let cloud = deformed_points(geometry, delta)?;
        let m = chamfer_matches(&cloud, target)?;
        chamfer.push(m.sum());
        matches.push(m);
        deformed.push(cloud);
    }
    Ok(QueryEvaluation { terms: QueryTerms { logits, deltas, chamfer }, deformed, matches })
}

/// Gradient of the total loss with respect to one query's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGradient {
    pub logits: Vec<f64>,
    /// Per template, one vector per control point.
    pub deltas: Vec<Vec<Vector>>,
}

/// Gradient of the summed Chamfer distance with respect to the points of
/// `deformed`, holding the nearest-neighbour correspondences fixed.
pub fn chamfer_point_gradient(deformed: &[Point], target: &[Point], matches: &ChamferMatches) -> Vec<Vector> {
    let mut grad = vec![Vector::zeros(); deformed.len()];
    for (i, &(j, _)) in matches.a_to_b.iter().enumerate() {
        grad[i] += (deformed[i] - target[j]) * 2.0;
    }
    for (j, &(i, _)) in matches.b_to_a.iter().enumerate() {
        grad[i] += (deformed[i] - target[j]) * 2.0;
    }
    grad
}

/// Analytic gradients of [`total_loss`] for a batch of evaluated queries.
///
/// Chamfer terms use the correspondences stored in each evaluation; the
/// product `f(g) c` is differentiated through both factors, and the weight
/// gradient is pulled back through the floored softmax.
pub fn loss_gradients(
    batch: &[QueryEvaluation],
    templates: &[Vec<TemplateGeometry<'_>>],
    targets: &[&[Point]],
    config: &RegimeConfig,
    batch_index: u64,
) -> Result<(LossBreakdown, Vec<QueryGradient>)> {
    if templates.len() != batch.len() || targets.len() != batch.len() {
        return Err(Error::DimensionMismatch("batch, template and target counts differ".into()));
    }
    let breakdown = total_loss(batch, config, batch_index)?;
    let q_count = batch.len() as f64;
    // d lambda_e / d g_qt is the same for every query
    let entropy_grad: Vec<f64> = breakdown
        .mean_weights
        .iter()
        .map(|&m| if m > 0.0 { (m.ln() + 1.0) / q_count } else { 0.0 })
        .collect();

    let grads: Vec<QueryGradient> = batch
        .par_iter()
        .zip(templates.par_iter())
        .zip(targets.par_iter())
        .zip(breakdown.weights.par_iter())
        .map(|(((eval, geometry), target), weights)| {
            query_gradient(eval, geometry, target, weights, &entropy_grad, config, &breakdown)
        })
        .collect();

    for (q, g) in grads.iter().enumerate() {
        let finite = g.logits.iter().all(|v| v.is_finite())
            && g.deltas.iter().flatten().all(|v| v.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::NonFinite(format!("gradient of query {q} at step {batch_index}")));
        }
    }
    Ok((breakdown, grads))
}

fn query_gradient(
    eval: &QueryEvaluation,
    geometry: &[TemplateGeometry<'_>],
    target: &[Point],
    weights: &TemplateWeights,
    entropy_grad: &[f64],
    config: &RegimeConfig,
    breakdown: &LossBreakdown,
) -> QueryGradient {
    let t_count = weights.len();
    let mut gamma_grad = vec![0.0; t_count];
    let mut deltas = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let g = weights.floored[t];
        let f = weighting_fn(g, config.weighting).unwrap_or(f64::INFINITY);
        let point_grad = chamfer_point_gradient(&eval.deformed[t], target, &eval.matches[t]);
        let mut d = geometry[t].basis.transpose_multiply(&point_grad);
        let reg = 2.0 * breakdown.kappa_r * g;
        for (dv, delta) in d.iter_mut().zip(eval.terms.deltas[t].values()) {
            *dv = *dv * f + delta * reg;
        }
        deltas.push(d);
        gamma_grad[t] = weighting_derivative(g, config.weighting) * eval.terms.chamfer[t]
            + breakdown.kappa_e * entropy_grad[t]
            + breakdown.kappa_r * eval.terms.deltas[t].squared_norm();
    }
    // floored softmax: dg_s/dz_r = (1 - eps) s_s (delta_sr - s_r)
    let inner: f64 = gamma_grad.iter().zip(&weights.softmax).map(|(g, s)| g * s).sum();
    let logits = weights
        .softmax
        .iter()
        .zip(&gamma_grad)
        .map(|(s, g)| (1.0 - weights.epsilon) * s * (g - inner))
        .collect();
    QueryGradient { logits, deltas }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffd::{build_lattice, decompose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dominant_logit_limit() {
        let mut logits = vec![0.0; 30];
        logits[7] = 50.0;
        let w = floor_weights(&logits, 0.1).unwrap();
        assert!((w.floored[7] - (0.9 + 0.1 / 30.0)).abs() < 1e-12);
        for (i, &g) in w.floored.iter().enumerate() {
            if i != 7 {
                assert!((g - 0.1 / 30.0).abs() < 1e-12);
            }
        }
        assert_eq!(w.argmax(), 7);
    }

    #[test]
    fn uniform_and_single_template() {
        let w = floor_weights(&[0.3; 8], 0.1).unwrap();
        assert!(w.floored.iter().all(|&g| g == 1.0 / 8.0));
        assert_eq!(floor_weights(&[-4.0], 0.7).unwrap().floored, vec![1.0]);
        assert!(floor_weights(&[f64::NAN, 0.0], 0.1).is_err());
        assert!(floor_weights(&[], 0.1).is_err());
    }

    #[test]
    fn weighting_values() {
        assert_eq!(weighting_fn(0.25, Weighting::Identity).unwrap(), 0.25);
        assert_eq!(weighting_fn(0.0, Weighting::LogBarrier).unwrap(), 0.0);
        let g = 1.0 - (-2.0f64).exp();
        assert!((weighting_fn(g, Weighting::LogBarrier).unwrap() - 2.0).abs() < 1e-12);
        assert!(weighting_fn(1.0, Weighting::LogBarrier).is_err());
    }

    #[test]
    fn weighted_chamfer_examples() {
        let w = floor_weights(&[0.0; 4], 0.1).unwrap();
        let c = [1.0, 2.0, 3.0, 4.0];
        assert!((weighted_chamfer_loss(&c, &w, Weighting::Identity).unwrap() - 2.5).abs() < 1e-15);
        // -ln(3/4) * (1 + 2 + 3 + 4)
        let expected = -(0.75f64).ln() * 10.0;
        assert!((weighted_chamfer_loss(&c, &w, Weighting::LogBarrier).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 2.8768).abs() < 1e-4);
        let single = floor_weights(&[0.0], 0.1).unwrap();
        assert_eq!(weighted_chamfer_loss(&[5.0], &single, Weighting::Identity).unwrap(), 5.0);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy_penalty(&[[0.25; 4]]) + 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy_penalty(&[[0.0, 1.0, 0.0]]), 0.0);
        let half = entropy_penalty(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        assert!((half + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn regularizer_examples() {
        let w = floor_weights(&[0.0], 0.1).unwrap();
        let mut v = vec![Vector::zeros(); 8];
        v[3].y = 2.0;
        let d = DeformationDelta::new(v).unwrap();
        assert_eq!(deformation_regularizer(&[d], &w).unwrap(), 4.0);
    }

    #[test]
    fn anneal_values() {
        assert_eq!(anneal(100.0, 0, 10_000), 100.0);
        assert!((anneal(100.0, 10_000, 10_000) - 36.787944117144235).abs() < 1e-9);
        assert!(anneal(1.0, 1_000_000, 10_000) < 1e-40);
    }

    #[test]
    fn presets_round_trip_and_validate() {
        for id in RegimeId::NAMED {
            let c = RegimeConfig::preset(id).unwrap();
            c.validate().unwrap();
            assert_eq!(RegimeConfig::from_json(&c.to_json()).unwrap(), c);
        }
        let mut bad = RegimeConfig::named("e").unwrap();
        bad.kappa_e0 = 5.0;
        assert!(bad.validate().is_err());
        bad.id = RegimeId::Custom;
        bad.validate().unwrap();
        assert!(RegimeConfig::named("x").is_err());
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<Point>>, Vec<crate::ControlLattice>, Vec<DeformationMatrix>) {
        let mut clouds = Vec::new();
        let mut lattices = Vec::new();
        let mut bases = Vec::new();
        for _ in 0..2 {
            let pts: Vec<Point> = (0..20).map(|_| Point::new(rng.random(), rng.random(), rng.random())).collect();
            let lattice = build_lattice(&pts, [2, 2, 2], 0.05).unwrap();
            bases.push(decompose(&lattice, &pts));
            lattices.push(lattice);
            clouds.push(pts);
        }
        (clouds, lattices, bases)
    }

    fn same_matches(a: &QueryEvaluation, b: &QueryEvaluation) -> bool {
        a.matches.iter().zip(&b.matches).all(|(x, y)| x.same_correspondences(y))
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, lattices, bases) = random_instance(&mut rng);
        let geometry: Vec<TemplateGeometry> = bases
            .iter()
            .zip(&lattices)
            .map(|(b, l)| TemplateGeometry { basis: b, control_points: l.control_points() })
            .collect();
        let target: Vec<Point> = (0..20).map(|_| Point::new(rng.random(), rng.random(), rng.random())).collect();
        let logits: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let deltas: Vec<DeformationDelta> = (0..2)
            .map(|_| {
                DeformationDelta::new(
                    (0..27).map(|_| Vector::from_fn(|_, _| rng.random_range(-0.05..0.05))).collect(),
                )
                .unwrap()
            })
            .collect();
        let mut config = RegimeConfig::named("e").unwrap();
        config.id = RegimeId::Custom;
        config.kappa_r0 = 1.0;

        let eval = |logits: Vec<f64>, deltas: Vec<DeformationDelta>| {
            evaluate_query(&geometry, &target, logits, deltas).unwrap()
        };
        let base = eval(logits.clone(), deltas.clone());
        let (_, grads) =
            loss_gradients(std::slice::from_ref(&base), std::slice::from_ref(&geometry), &[&target], &config, 0).unwrap();

        let h = 1e-5;
        let loss = |e: &QueryEvaluation| total_loss(std::slice::from_ref(e), &config, 0).unwrap().total;
        for t in 0..2 {
            let mut lp = logits.clone();
            let mut lm = logits.clone();
            lp[t] += h;
            lm[t] -= h;
            let fd = (loss(&eval(lp, deltas.clone())) - loss(&eval(lm, deltas.clone()))) / (2.0 * h);
            let a = grads[0].logits[t];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3) < 1e-4, "{a} {fd}");
        }
        let mut checked = 0;
        for t in 0..2 {
            for c in 0..27 * 3 {
                let shift = |s: f64| {
                    let mut ds = deltas.clone();
                    let mut flat = ds[t].to_flat();
                    flat[c] += s;
                    ds[t] = DeformationDelta::from_flat(&flat).unwrap();
                    eval(logits.clone(), ds)
                };
                let (p, m) = (shift(h), shift(-h));
                if !same_matches(&p, &base) || !same_matches(&m, &base) {
                    continue;
                }
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                let a = grads[0].deltas[t][c / 3][c % 3];
                assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3) < 1e-4, "{a} {fd}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }
}
