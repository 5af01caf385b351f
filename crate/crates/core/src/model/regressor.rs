//! Shared hidden layer followed by one affine head per template.
//!
//! Parameters live in one flat vector, in this order:
//! `W1` (`H x D`, row-major), `b1` (`H`), then for each template `t`:
//! `W2_t` (`(3M+1) x H`, row-major), `b2_t` (`3M+1`). The first `3M`
//! outputs of a head are the flattened deformation, the last is the logit.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::schedule::stream_rng;
use crate::{DeformationDelta, Error, Result};

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 512;
/// Standard deviation of the initial head weights.
pub const HEAD_INIT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub feature_dim: usize,
    pub hidden: usize,
    pub templates: usize,
    pub control_points: usize,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Per template, `3M + 1` outputs.
    pub heads: Vec<Vec<f64>>,
}

impl Forward {
    pub fn delta(&self, t: usize) -> Result<DeformationDelta> {
        let out = &self.heads[t];
        DeformationDelta::from_flat(&out[..out.len() - 1])
    }

    pub fn logits(&self) -> Vec<f64> {
        self.heads.iter().map(|h| h[h.len() - 1]).collect()
    }
}

impl RegressorModel {
    /// Random trunk (He-normal), small random heads, zero biases.
    pub fn new(feature_dim: usize, hidden: usize, templates: usize, control_points: usize, seed: u64) -> Result<Self> {
        if feature_dim == 0 || hidden == 0 || templates == 0 || control_points == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        let mut model = Self { feature_dim, hidden, templates, control_points, params: Vec::new() };
        model.params = vec![0.0; model.param_count()];
        let mut rng = stream_rng(seed, 0);
        let trunk = Normal::new(0.0, (2.0 / feature_dim as f64).sqrt()).expect("valid std");
        let head = Normal::new(0.0, HEAD_INIT_SCALE).expect("valid std");
        let (w1, _) = model.trunk_ranges();
        for p in &mut model.params[w1] {
            *p = trunk.sample(&mut rng);
        }
        for t in 0..templates {
            let (w2, _) = model.head_ranges(t);
            for p in &mut model.params[w2] {
                *p = head.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn head_width(&self) -> usize {
        3 * self.control_points + 1
    }

    pub fn param_count(&self) -> usize {
        self.hidden * (self.feature_dim + 1) + self.templates * self.head_width() * (self.hidden + 1)
    }

    fn trunk_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let w = self.hidden * self.feature_dim;
        (0..w, w..w + self.hidden)
    }

    fn head_ranges(&self, t: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start = self.hidden * (self.feature_dim + 1) + t * self.head_width() * (self.hidden + 1);
        let w = self.head_width() * self.hidden;
        (start..start + w, start + w..start + w + self.head_width())
    }

    /// Sets every head weight and bias to zero: all deformations vanish and
    /// the weights are uniform.
    pub fn zero_heads(&mut self) {
        let start = self.hidden * (self.feature_dim + 1);
        self.params[start..].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, feature: &[f64]) -> Result<Forward> {
        if feature.len() != self.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.feature_dim,
                feature.len()
            )));
        }
        let (w1, b1) = self.trunk_ranges();
        let w1 = &self.params[w1];
        let b1 = &self.params[b1];
        let pre: Vec<f64> = (0..self.hidden)
            .map(|h| b1[h] + dot(&w1[h * self.feature_dim..(h + 1) * self.feature_dim], feature))
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
        let width = self.head_width();
        let heads = (0..self.templates)
            .map(|t| {
                let (w2, b2) = self.head_ranges(t);
                let w2 = &self.params[w2];
                let b2 = &self.params[b2];
                (0..width).map(|o| b2[o] + dot(&w2[o * self.hidden..(o + 1) * self.hidden], &hidden)).collect()
            })
            .collect();
        Ok(Forward { pre, hidden, heads })
    }

    /// Adds the parameter gradient for one input to `grad`, given the loss
    /// gradient with respect to every head output.
    pub fn accumulate_gradient(&self, feature: &[f64], forward: &Forward, head_grads: &[Vec<f64>], grad: &mut [f64]) {
        let mut d_hidden = vec![0.0; self.hidden];
        for (t, dout) in head_grads.iter().enumerate() {
            let (w2, b2) = self.head_ranges(t);
            let w2_start = w2.start;
            for (o, &g) in dout.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = w2_start + o * self.hidden;
                for h in 0..self.hidden {
                    grad[row + h] += g * forward.hidden[h];
                    d_hidden[h] += g * self.params[row + h];
                }
                grad[b2.start + o] += g;
            }
        }
        let (w1, b1) = self.trunk_ranges();
        for h in 0..self.hidden {
            if forward.pre[h] <= 0.0 {
                continue;
            }
            let g = d_hidden[h];
            let row = w1.start + h * self.feature_dim;
            for (i, x) in feature.iter().enumerate() {
                grad[row + i] += g * x;
            }
            grad[b1.start + h] += g;
        }
    }

    /// Draws a feature vector with standard normal entries; handy for tests.
    pub fn random_feature(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = Normal::new(0.0, 1.0).expect("valid std");
        (0..self.feature_dim).map(|_| n.sample(rng)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
