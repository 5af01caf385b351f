//! Template preparation, per-instance fitting and the toy regressor.

mod adam;
mod benchmark;
mod checkpoint;
mod dataset;
mod fit;
mod inference;
mod regressor;
pub mod schedule;
mod template;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use benchmark::{
    benchmark_meshes, benchmark_templates, standard_benchmark, BENCHMARK_SEED, BENCHMARK_TARGETS_PER_TEMPLATE,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use dataset::{make_synthetic_dataset, DatasetSpec, SyntheticDataset, SyntheticRecord};
pub use fit::{fit_multi, fit_single, single_regime, FitOptions, MultiFit, SingleFit, TraceEntry};
pub use inference::{
    evaluate_selections, infer, selection_stats, selections_from_log, sorted_histogram, Inference,
    SelectionOutcome, SelectionStats,
};
pub use regressor::{Forward, RegressorModel, DEFAULT_HIDDEN, HEAD_INIT_SCALE};
pub use schedule::SubsampleSchedule;
pub use template::{build_template, Template, TemplateOptions};
pub use train::{log_to_jsonl, parse_log, train_regressor, TrainOptions, TrainOutcome, TrainRecord};
