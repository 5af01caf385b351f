use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "ffd",
    version,
    about = "Free-form deformation of template meshes: fitting, training, evaluation",
    after_help = "Any subcommand accepts `--config FILE`: a JSON object whose keys are long flag names \
                  (optionally nested under the subcommand name). Flags given on the command line win.\n\
                  FFD_THREADS sets the worker thread count.\n\
                  Exit codes: 0 success, 2 input/parse error, 3 shape/consistency error, 4 numerical failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Deform a mesh with a control-point displacement file.
    Deform(DeformArgs),
    /// Fit one or more templates to a target by direct optimization.
    Fit(FitArgs),
    /// Train the selection/deformation regressor on a synthetic dataset.
    Train(TrainArgs),
    /// Generate a synthetic dataset from a directory of templates.
    MakeDataset(MakeDatasetArgs),
    /// Write the four standard benchmark template meshes.
    BenchmarkTemplates(BenchmarkTemplatesArgs),
    /// Score a predicted mesh against ground truth.
    Eval(EvalArgs),
    /// Carry per-point labels of a template cloud through a deformation.
    TransferLabels(TransferLabelsArgs),
    /// Voxelize a mesh into a filled occupancy grid.
    Voxelize(VoxelizeArgs),
    /// Selection histograms and cumulative Chamfer tables from training runs.
    Report(ReportArgs),
}

/// `3` or `3,3,3`.
pub fn parse_degrees(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad degree '{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [d] => Ok([*d; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected one degree or three comma-separated degrees".into()),
    }
}

/// How template meshes are prepared.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TemplateArgs {
    /// Lattice degrees (l,m,n).
    #[arg(long, value_parser = parse_degrees, default_value = "3,3,3")]
    pub degrees: [usize; 3],
    /// Surface samples per template.
    #[arg(long, default_value_t = ffd_core::SURFACE_SAMPLES)]
    pub samples: usize,
    /// Subdivide template edges longer than this.
    #[arg(long, default_value_t = ffd_core::TEMPLATE_MAX_EDGE)]
    pub max_edge: f64,
    /// Keep template meshes as given.
    #[arg(long)]
    pub no_subdivide: bool,
    /// Lattice padding as a fraction of the bounding box.
    #[arg(long, default_value_t = ffd_core::ffd::DEFAULT_PADDING)]
    pub padding: f64,
    /// Seed for template surface sampling.
    #[arg(long, default_value_t = 0)]
    pub template_seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DeformArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Lattice degrees; taken from the delta's sidecar when present.
    #[arg(long, value_parser = parse_degrees)]
    pub lattice_degrees: Option<[usize; 3]>,
    #[arg(long, default_value_t = ffd_core::ffd::DEFAULT_PADDING)]
    pub padding: f64,
    /// Displacement CSV (`dx,dy,dz` per control point).
    #[arg(long)]
    pub delta: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Subdivide edges longer than this before deforming.
    #[arg(long)]
    pub subdivide: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Template mesh; repeat to fit several templates jointly.
    #[arg(long, required = true)]
    pub template: Vec<PathBuf>,
    /// Target mesh (sampled) or CSV point cloud.
    #[arg(long)]
    pub target: PathBuf,
    /// Regime name (b, w, e, r) or a JSON regime file.
    #[arg(long, default_value = "b")]
    pub regime: String,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Points drawn from each cloud per step.
    #[arg(long, default_value_t = ffd_core::LOSS_SUBSAMPLE)]
    pub subsample: usize,
    /// Samples drawn from a target mesh.
    #[arg(long, default_value_t = ffd_core::SURFACE_SAMPLES)]
    pub target_samples: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[command(flatten)]
    pub template_options: TemplateArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Directory of template meshes (.obj/.off), used in file-name order.
    #[arg(long)]
    pub templates_dir: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "b")]
    pub regime: String,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Width of the shared hidden layer.
    #[arg(long, default_value_t = ffd_core::model::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = ffd_core::LOSS_SUBSAMPLE)]
    pub subsample: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Expected feature length; must match the dataset.
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Fraction of records held out for the evaluation summary.
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub template_options: TemplateArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeDatasetArgs {
    #[arg(long)]
    pub templates_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_per_template: usize,
    /// Displacements are uniform in +-scale * lattice extent.
    #[arg(long, default_value_t = 0.05)]
    pub delta_scale: f64,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub template_options: TemplateArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkTemplatesArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = ffd_core::SURFACE_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = ffd_core::VOXEL_RESOLUTION)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = ffd_core::metrics::EMD_SUBSAMPLE)]
    pub emd_points: usize,
    /// Also write the score JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TransferLabelsArgs {
    #[arg(long)]
    pub template_mesh: PathBuf,
    /// CSV `x,y,z,label` on the template surface.
    #[arg(long)]
    pub template_labels: PathBuf,
    #[arg(long)]
    pub delta: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_degrees)]
    pub lattice_degrees: Option<[usize; 3]>,
    #[arg(long, default_value_t = ffd_core::ffd::DEFAULT_PADDING)]
    pub padding: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VoxelizeArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = ffd_core::VOXEL_RESOLUTION)]
    pub resolution: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame margin around the mesh bounding cube, per side, relative to its size.
    #[arg(long, default_value_t = ffd_core::metrics::DEFAULT_FRAME_MARGIN)]
    pub margin: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Training log (JSON lines); repeat to compare runs.
    #[arg(long, required = true)]
    pub log: Vec<PathBuf>,
    /// Selection outcomes (JSON lines, as written by `train`); repeat.
    #[arg(long)]
    pub outcomes: Vec<PathBuf>,
    /// Column names, one per log; defaults to the log's directory name.
    #[arg(long)]
    pub name: Vec<String>,
    /// Only use the last N records of each log.
    #[arg(long)]
    pub last: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
