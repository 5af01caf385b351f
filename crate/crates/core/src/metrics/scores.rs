//! Scoring a predicted mesh against a ground-truth mesh.

use serde::{Deserialize, Serialize};

use super::{chamfer_matches, earth_mover, iou, voxelize, VoxelFrame, DEFAULT_FRAME_MARGIN};
use crate::mesh::{hemisphere_normalize, sample_surface, subsample_indices, Mesh};
use crate::{Point, Result, SimilarityTransform, EVAL_HEMISPHERE_RADIUS};

/// Points per cloud used for the earth mover term.
pub const EMD_SUBSAMPLE: usize = 1024;

/// Offset mixed into the seed for the shared earth-mover subsample, so it
/// is not correlated with the surface samples.
const EMD_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub resolution: usize,
    pub emd_points: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            n_samples: crate::SURFACE_SAMPLES,
            seed: 0,
            resolution: crate::VOXEL_RESOLUTION,
            emd_points: EMD_SUBSAMPLE,
        }
    }
}

/// Normalized meshes and samples that the scores are computed from.
#[derive(Debug, Clone)]
pub struct EvalInputs {
    pub transform: SimilarityTransform,
    pub gt: Mesh,
    pub pred: Mesh,
    pub gt_samples: Vec<Point>,
    pub pred_samples: Vec<Point>,
    /// Shared indices into both sample sets for the earth mover term.
    pub emd_indices: Vec<usize>,
    pub frame: VoxelFrame,
}

/// Normalizes both meshes with the ground truth's hemisphere transform and
/// samples them.
pub fn prepare_eval(gt: &Mesh, pred: &Mesh, options: &ScoreOptions) -> Result<EvalInputs> {
    gt.ensure_nonempty()?;
    pred.ensure_nonempty()?;
    let (gt_n, transform) = hemisphere_normalize(gt, EVAL_HEMISPHERE_RADIUS)?;
    let pred_n = pred.transformed(&transform);
    let gt_samples = sample_surface(&gt_n, options.n_samples, options.seed)?.into_points();
    let pred_samples = sample_surface(&pred_n, options.n_samples, options.seed)?.into_points();
    let emd_points = options.emd_points.min(options.n_samples);
    let emd_indices = subsample_indices(options.n_samples, emd_points, options.seed ^ EMD_SEED_SALT)?;
    let frame = VoxelFrame::around(gt_n.vertices(), options.resolution, DEFAULT_FRAME_MARGIN)?;
    Ok(EvalInputs { transform, gt: gt_n, pred: pred_n, gt_samples, pred_samples, emd_indices, frame })
}

/// Scores in the normalized frame. Chamfer and earth mover distance are
/// reported both summed and averaged; the headline triple uses averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub chamfer_sum: f64,
    /// Each direction divided by its cloud size, then added.
    pub chamfer_mean: f64,
    pub emd_sum: f64,
    /// Earth mover distance divided by the number of matched points.
    pub emd_mean: f64,
    pub iou: f64,
    pub options: ScoreOptions,
    pub normalization: NormalizationRecord,
    pub conventions: Conventions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub radius: f64,
    pub scale: f64,
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub chamfer: String,
    pub emd: String,
    pub iou: String,
    pub triple: String,
}

impl ScoreReport {
    /// `1000 x (chamfer / emd / 1 - IoU)` rounded to integers, using the
    /// averaged distances.
    pub fn triple(&self) -> [i64; 3] {
        let scaled = |x: f64| (1000.0 * x).round() as i64;
        [scaled(self.chamfer_mean), scaled(self.emd_mean), scaled(1.0 - self.iou)]
    }

    pub fn triple_string(&self) -> String {
        let [a, b, c] = self.triple();
        format!("{a}/{b}/{c}")
    }
}

pub fn report_scores(gt: &Mesh, pred: &Mesh, options: &ScoreOptions) -> Result<ScoreReport> {
    let inputs = prepare_eval(gt, pred, options)?;
    let matches = chamfer_matches(&inputs.pred_samples, &inputs.gt_samples)?;
    let pick = |cloud: &[Point]| -> Vec<Point> { inputs.emd_indices.iter().map(|&i| cloud[i]).collect() };
    let emd_sum = earth_mover(&pick(&inputs.pred_samples), &pick(&inputs.gt_samples))?;
    let gt_grid = voxelize(&inputs.gt, options.resolution, Some(inputs.frame))?;
    let pred_grid = voxelize(&inputs.pred, options.resolution, Some(inputs.frame))?;
    Ok(ScoreReport {
        chamfer_sum: matches.sum(),
        chamfer_mean: matches.mean(),
        emd_sum,
        emd_mean: emd_sum / inputs.emd_indices.len() as f64,
        iou: iou(&gt_grid, &pred_grid)?,
        options: *options,
        normalization: NormalizationRecord {
            radius: EVAL_HEMISPHERE_RADIUS,
            scale: inputs.transform.scale,
            translation: inputs.transform.translation.into(),
        },
        conventions: Conventions {
            chamfer: "chamfer_sum: sum of squared nearest distances over both directions; \
                      chamfer_mean: each direction divided by its point count"
                .into(),
            emd: format!(
                "exact assignment on {} shared-index subsampled points; emd_mean = emd_sum / points",
                inputs.emd_indices.len()
            ),
            iou: "filled occupancy on the ground truth's frame (bounding cube + 2% per side)".into(),
            triple: "round(1000*chamfer_mean)/round(1000*emd_mean)/round(1000*(1-iou))".into(),
        },
    })
}
