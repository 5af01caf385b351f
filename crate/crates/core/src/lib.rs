//! Free-form deformation of template meshes with Bernstein control lattices,
//! point-cloud and volumetric comparison metrics, and a multi-template
//! weighted-deformation objective with direct fitting and a small trainable
//! regressor.

pub mod error;
pub mod ffd;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod model;

pub use error::{Error, ErrorCategory, Result};
pub use ffd::{ControlLattice, DeformationDelta, DeformationMatrix};
pub use mesh::{Mesh, MeshFormat, PointCloud, SimilarityTransform};
pub use metrics::VoxelGrid;

/// A point in model space.
pub type Point = nalgebra::Point3<f64>;
/// A displacement in model space.
pub type Vector = nalgebra::Vector3<f64>;

/// Radius of the bounding hemisphere used when scoring reconstructions.
pub const EVAL_HEMISPHERE_RADIUS: f64 = 3.2;
/// Surface samples drawn per model.
pub const SURFACE_SAMPLES: usize = 16_384;
/// Points drawn from the surface samples for each loss evaluation.
pub const LOSS_SUBSAMPLE: usize = 1_024;
/// Maximum template edge length after subdivision.
pub const TEMPLATE_MAX_EDGE: f64 = 0.02;
/// Voxel grid resolution used for IoU.
pub const VOXEL_RESOLUTION: usize = 32;
