//! The standard synthetic benchmark: four dissimilar unit-cube templates
//! with a balanced, seeded set of deformed targets.

use super::dataset::{make_synthetic_dataset, DatasetSpec, SyntheticDataset};
use super::template::{build_template, Template, TemplateOptions};
use crate::mesh::primitives;
use crate::{Point, Result};

pub const BENCHMARK_SEED: u64 = 7;
pub const BENCHMARK_TARGETS_PER_TEMPLATE: usize = 50;

/// Template meshes, each inside `[0,1]^3`: box, sphere, chair, table.
pub fn benchmark_meshes() -> Vec<(String, crate::Mesh)> {
    let sphere = primitives::uv_sphere(0.5, 12, 24).translated(&Point::new(0.5, 0.5, 0.5).coords);
    vec![
        ("box".into(), primitives::cube()),
        ("sphere".into(), sphere),
        ("chair".into(), primitives::sparse_chair()),
        ("table".into(), primitives::table()),
    ]
}

pub fn benchmark_templates(options: &TemplateOptions) -> Result<Vec<Template>> {
    benchmark_meshes()
        .into_iter()
        .map(|(id, mesh)| build_template(id, &mesh, options, None))
        .collect()
}

/// Templates and a 200-record dataset (50 per template).
pub fn standard_benchmark(options: &TemplateOptions) -> Result<(Vec<Template>, SyntheticDataset)> {
    let templates = benchmark_templates(options)?;
    let spec = DatasetSpec {
        n_per_template: BENCHMARK_TARGETS_PER_TEMPLATE,
        seed: BENCHMARK_SEED,
        ..Default::default()
    };
    let dataset = make_synthetic_dataset(&templates, &spec)?;
    Ok((templates, dataset))
}
