//! Point-cloud and volumetric comparison metrics: Chamfer distance, earth
//! mover distance and voxel IoU, plus the combined evaluation score.

mod chamfer;
mod emd;
mod scores;
pub mod spatial;
mod voxel;

pub use chamfer::{chamfer, chamfer_matches, nearest_all, ChamferMatches};
pub use emd::{earth_mover, earth_mover_with_cap, Assignment, DEFAULT_EMD_CAP};
pub use scores::{prepare_eval, report_scores, EvalInputs, ScoreOptions, ScoreReport, EMD_SUBSAMPLE};
pub use spatial::KdTree;
pub use voxel::{
    iou, load_voxels, save_voxels, triangle_box_overlap, voxelize, VoxelFrame, VoxelGrid,
    DEFAULT_FRAME_MARGIN,
};
