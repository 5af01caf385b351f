//! Synthetic training data: each record is a template deformed by a random
//! control-point displacement, with a feature vector that linearly encodes
//! the template id and the displacement.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::schedule::stream_rng;
use super::template::Template;
use crate::{DeformationDelta, Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_per_template: usize,
    /// Displacement entries are uniform in `+-delta_scale * lattice extent`.
    pub delta_scale: f64,
    /// Feature length; `None` picks `max(32, T + 3M)` so the encoding is
    /// invertible.
    pub feature_dim: Option<usize>,
    /// Standard deviation of Gaussian noise added to the features.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { n_per_template: 50, delta_scale: 0.05, feature_dim: None, noise: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub feature: Vec<f64>,
    pub template: usize,
    /// Flattened ground-truth displacement.
    pub delta: Vec<f64>,
}

impl SyntheticRecord {
    pub fn delta(&self) -> Result<DeformationDelta> {
        DeformationDelta::from_flat(&self.delta)
    }
}

/// Records plus everything needed to regenerate them. Target clouds are
/// not stored: record `i`'s target is its template's samples deformed by its
/// displacement, see [`SyntheticDataset::target`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub feature_dim: usize,
    pub template_ids: Vec<String>,
    pub control_points: usize,
    /// `feature_dim x (T + 3M)` row-major encoding matrix.
    pub projection: Vec<f64>,
    pub records: Vec<SyntheticRecord>,
}

pub fn make_synthetic_dataset(templates: &[Template], spec: &DatasetSpec) -> Result<SyntheticDataset> {
    let Some(first) = templates.first() else {
        return Err(Error::InvalidArgument("need at least one template".into()));
    };
    let m = first.control_count();
    if templates.iter().any(|t| t.control_count() != m) {
        return Err(Error::DimensionMismatch("templates have different control point counts".into()));
    }
    if !(spec.delta_scale >= 0.0 && spec.noise >= 0.0) {
        return Err(Error::InvalidArgument("delta_scale and noise must be non-negative".into()));
    }
    let t_count = templates.len();
    let code_len = t_count + 3 * m;
    let feature_dim = spec.feature_dim.unwrap_or(code_len.max(32));
    if feature_dim == 0 {
        return Err(Error::InvalidArgument("feature dimension must be positive".into()));
    }

    let gauss = Normal::new(0.0, 1.0).expect("valid std");
    let mut rng = stream_rng(spec.seed, 0);
    let column_scale = 1.0 / (code_len as f64).sqrt();
    let projection: Vec<f64> = (0..feature_dim * code_len).map(|_| gauss.sample(&mut rng) * column_scale).collect();

    let mut records = Vec::with_capacity(t_count * spec.n_per_template);
    for i in 0..t_count * spec.n_per_template {
        let t = i % t_count;
        let bound = spec.delta_scale * templates[t].lattice.extent();
        let delta: Vec<f64> = (0..3 * m)
            .map(|_| if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 })
            .collect();
        let mut code = vec![0.0; code_len];
        code[t] = 1.0;
        if bound > 0.0 {
            for (c, d) in code[t_count..].iter_mut().zip(&delta) {
                *c = d / bound;
            }
        }
        let feature = (0..feature_dim)
            .map(|r| {
                let row = &projection[r * code_len..(r + 1) * code_len];
                let clean: f64 = row.iter().zip(&code).map(|(a, c)| a * c).sum();
                if spec.noise > 0.0 {
                    clean + spec.noise * gauss.sample(&mut rng)
                } else {
                    clean
                }
            })
            .collect();
        records.push(SyntheticRecord { feature, template: t, delta });
    }
    Ok(SyntheticDataset {
        spec: *spec,
        feature_dim,
        template_ids: templates.iter().map(|t| t.id.clone()).collect(),
        control_points: m,
        projection,
        records,
    })
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that `templates` are the ones this dataset was made from.
    pub fn check_templates(&self, templates: &[Template]) -> Result<()> {
        let ids: Vec<&str> = templates.iter().map(|t| t.id.as_str()).collect();
        if ids != self.template_ids.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::DimensionMismatch(format!(
                "dataset was built for templates {:?}, got {:?}",
                self.template_ids, ids
            )));
        }
        if templates.iter().any(|t| t.control_count() != self.control_points) {
            return Err(Error::DimensionMismatch("template control point count differs from dataset".into()));
        }
        Ok(())
    }

    /// Full target cloud of record `i`: its template's samples deformed by the
    /// record's displacement (labels carried along).
    pub fn target(&self, i: usize, templates: &[Template]) -> Result<PointCloud> {
        let record = &self.records[i];
        templates[record.template].deform_samples(&record.delta()?)
    }

    /// Deterministic split into `(train, held_out)` index lists, holding out
    /// `fraction` of the records.
    pub fn split(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let n = self.records.len();
        let held = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let mut order = index::sample(&mut stream_rng(seed, 1), n, n).into_vec();
        let test = order.split_off(n - held);
        order.sort_unstable();
        let mut test = test;
        test.sort_unstable();
        (order, test)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        let code_len = data.template_ids.len() + 3 * data.control_points;
        if data.projection.len() != data.feature_dim * code_len
            || data.records.iter().any(|r| {
                r.feature.len() != data.feature_dim
                    || r.delta.len() != 3 * data.control_points
                    || r.template >= data.template_ids.len()
            })
        {
            return Err(Error::DimensionMismatch(format!("{}: inconsistent dataset shapes", path.display())));
        }
        Ok(data)
    }
}
