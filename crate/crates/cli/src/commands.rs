use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;
use serde_json::json;

use ffd_core::ffd::{build_lattice_for_mesh, decompose, load_delta, save_delta, apply_deformation, deform_mesh};
use ffd_core::losses::RegimeConfig;
use ffd_core::mesh::{load_cloud_csv, load_mesh, sample_surface, save_cloud_csv, save_mesh, subdivide_edges};
use ffd_core::metrics::{report_scores, save_voxels, voxelize, ScoreOptions, VoxelFrame};
use ffd_core::model::{
    benchmark_meshes, build_template, evaluate_selections, fit_multi, fit_single, load_checkpoint, log_to_jsonl,
    make_synthetic_dataset, parse_log, save_checkpoint, selection_stats, selections_from_log, sorted_histogram,
    train_regressor, AdamConfig, DatasetSpec, FitOptions, RegressorModel, SelectionOutcome, SyntheticDataset,
    Template, TemplateOptions, TrainOptions,
};
use ffd_core::{ControlLattice, DeformationDelta, Error, Mesh, MeshFormat, PointCloud};

use crate::args::*;
use crate::manifest::{output_dir, RunManifest};

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Deform(a) => deform(a),
        Command::Fit(a) => fit(a),
        Command::Train(a) => train(a),
        Command::MakeDataset(a) => make_dataset(a),
        Command::BenchmarkTemplates(a) => benchmark_templates(a),
        Command::Eval(a) => eval(a),
        Command::TransferLabels(a) => transfer_labels(a),
        Command::Voxelize(a) => voxelize_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn mesh_format(path: &Path) -> Result<MeshFormat> {
    MeshFormat::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!("{}: unknown mesh extension (expected .obj or .off)", path.display())).into()
    })
}

fn read_mesh(path: &Path) -> Result<Mesh> {
    load_mesh(path, mesh_format(path)?).with_context(|| format!("loading {}", path.display()))
}

fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    save_mesh(mesh, path, mesh_format(path)?).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::from).with_context(|| format!("writing {}", path.display()))
}

/// Prints a line; a closed pipe (e.g. `| head`) is not an error.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

/// Creates the directory that will hold the file `out`.
fn ensure_parent(out: &Path) -> Result<()> {
    create_dir(&output_dir(out))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::from).with_context(|| format!("creating {}", dir.display()))
}

fn load_regime(spec: &str) -> Result<RegimeConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(Error::from)?;
        return RegimeConfig::from_json(&text).with_context(|| format!("regime file {spec}"));
    }
    Ok(RegimeConfig::named(spec)?)
}

fn template_options(a: &TemplateArgs) -> TemplateOptions {
    TemplateOptions {
        degrees: a.degrees,
        n_samples: a.samples,
        max_edge: if a.no_subdivide { None } else { Some(a.max_edge) },
        padding: a.padding,
        seed: a.template_seed,
    }
}

fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Mesh files of a directory in file-name order.
fn template_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::from)
        .with_context(|| format!("reading template directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && MeshFormat::from_path(p).is_some())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .obj/.off meshes in {}", dir.display())).into());
    }
    Ok(files)
}

fn build_templates(files: &[PathBuf], options: &TemplateOptions) -> Result<Vec<Template>> {
    files
        .par_iter()
        .map(|f| {
            let mesh = read_mesh(f)?;
            build_template(file_id(f), &mesh, options, None).with_context(|| format!("template {}", f.display()))
        })
        .collect()
}

/// Lattice from the delta's sidecar when there is one, else built around
/// the mesh.
fn resolve_lattice(
    mesh: &Mesh,
    delta_path: &Path,
    degrees: Option<[usize; 3]>,
    padding: f64,
) -> Result<(DeformationDelta, ControlLattice)> {
    let (delta, meta) = load_delta(delta_path).with_context(|| format!("loading {}", delta_path.display()))?;
    let lattice = match meta {
        Some(meta) => {
            if let Some(d) = degrees {
                if d != meta.degrees {
                    return Err(Error::DimensionMismatch(format!(
                        "--lattice-degrees {:?} disagree with the delta sidecar {:?}",
                        d, meta.degrees
                    ))
                    .into());
                }
            }
            ControlLattice::from_metadata(&meta)?
        }
        None => build_lattice_for_mesh(mesh, degrees.unwrap_or([3, 3, 3]), padding)?,
    };
    if delta.len() != lattice.len() {
        return Err(Error::DimensionMismatch(format!(
            "delta has {} control points, lattice has {}",
            delta.len(),
            lattice.len()
        ))
        .into());
    }
    Ok((delta, lattice))
}

fn deform(a: &DeformArgs) -> Result<()> {
    let mut manifest = RunManifest::new("deform", a, None)?;
    manifest.input(&a.mesh)?;
    manifest.input(&a.delta)?;
    let mesh = read_mesh(&a.mesh)?;
    let (delta, lattice) = resolve_lattice(&mesh, &a.delta, a.lattice_degrees, a.padding)?;
    let mesh = match a.subdivide {
        Some(eps) => subdivide_edges(&mesh, eps)?,
        None => mesh,
    };
    let out = deform_mesh(&mesh, &lattice, &delta)?;
    ensure_parent(&a.out)?;
    write_mesh(&out, &a.out)?;
    manifest.write(&output_dir(&a.out))?;
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let mut manifest = RunManifest::new("fit", a, Some(a.seed))?;
    for t in &a.template {
        manifest.input(t)?;
    }
    manifest.input(&a.target)?;
    let regime = load_regime(&a.regime)?;
    let templates = build_templates(&a.template, &template_options(&a.template_options))?;
    let target = if a.target.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        load_cloud_csv(&a.target).with_context(|| format!("loading {}", a.target.display()))?
    } else {
        sample_surface(&read_mesh(&a.target)?, a.target_samples, a.seed)?
    };
    let options = FitOptions {
        steps: a.steps,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        subsample: a.subsample,
        seed: a.seed,
    };
    let refs: Vec<&Template> = templates.iter().collect();
    let (deltas, weights, selected, trace) = if templates.len() == 1 {
        let f = fit_single(&templates[0], &target, &options, regime.kappa_r0, regime.b0)?;
        (vec![f.delta], vec![1.0], 0, f.trace)
    } else {
        let f = fit_multi(&refs, &target, &regime, &options)?;
        (f.deltas, f.weights.floored, f.selected, f.trace)
    };

    create_dir(&a.out)?;
    for (k, (d, t)) in deltas.iter().zip(&templates).enumerate() {
        save_delta(d, &t.lattice, &a.out.join(format!("delta_{k}.csv")))?;
    }
    let chosen = &templates[selected];
    save_delta(&deltas[selected], &chosen.lattice, &a.out.join("delta.csv"))?;
    write_mesh(&chosen.deform_mesh(&deltas[selected])?, &a.out.join("deformed.obj"))?;
    let mut trace_text = String::new();
    for entry in &trace {
        trace_text.push_str(&serde_json::to_string(entry)?);
        trace_text.push('\n');
    }
    write_text(&a.out.join("trace.jsonl"), &trace_text)?;
    let last = trace.last().expect("trace has the initial entry");
    let summary = json!({
        "templates": templates.iter().map(|t| t.id.clone()).collect::<Vec<_>>(),
        "selected": selected,
        "selected_template": chosen.id,
        "weights": weights,
        "steps": a.steps,
        "initial_total": trace[0].total,
        "final_total": last.total,
        "final_chamfer": last.chamfer,
        "regime": regime,
    });
    write_text(&a.out.join("fit.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    manifest.write(&a.out)?;
    say(&format!("selected {} ({}), final loss {:e}", selected, chosen.id, last.total));
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train", a, Some(a.seed))?;
    let files = template_files(&a.templates_dir)?;
    for f in &files {
        manifest.input(f)?;
    }
    manifest.input(&a.dataset)?;
    if let Some(r) = &a.resume {
        manifest.input(r)?;
    }
    let regime = load_regime(&a.regime)?;
    let dataset = SyntheticDataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    if let Some(d) = a.feature_dim {
        if d != dataset.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "--feature-dim {d} but the dataset has {} features",
                dataset.feature_dim
            ))
            .into());
        }
    }
    let options = template_options(&a.template_options);
    let templates = build_templates(&files, &options)?;
    dataset.check_templates(&templates)?;

    let (model, adam) = match &a.resume {
        Some(path) => {
            let (header, model, adam) = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            if header.regime != regime {
                return Err(Error::DimensionMismatch(format!(
                    "checkpoint was trained with regime {}, not {}",
                    header.regime.id, regime.id
                ))
                .into());
            }
            (model, Some(adam))
        }
        None => (
            RegressorModel::new(dataset.feature_dim, a.hidden, templates.len(), dataset.control_points, a.seed)?,
            None,
        ),
    };
    let (train_idx, eval_idx) = if a.holdout > 0.0 {
        dataset.split(a.holdout, a.seed)
    } else {
        let all: Vec<usize> = (0..dataset.len()).collect();
        (all.clone(), all)
    };
    let train_options = TrainOptions {
        steps: a.steps,
        batch_size: a.batch_size,
        subsample: a.subsample,
        seed: a.seed,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
    };
    info!("training {} steps, regime {}, {} records", a.steps, regime.id, train_idx.len());
    let outcome = train_regressor(model, adam, &dataset, &train_idx, &templates, &regime, &train_options)?;

    create_dir(&a.out)?;
    save_checkpoint(&a.out.join("model.ckpt"), &outcome.model, &outcome.adam, &regime, options.degrees)?;
    write_text(&a.out.join("train_log.jsonl"), &log_to_jsonl(&outcome.log))?;
    let mut summary = json!({
        "regime": regime,
        "steps": a.steps,
        "final_step": outcome.adam.step,
        "templates": dataset.template_ids,
    });
    if let Some(last) = outcome.log.last() {
        summary["final_total"] = json!(last.total);
        summary["training_selection_counts"] = json!(selections_from_log(&outcome.log)?);
    }
    if !eval_idx.is_empty() {
        let outcomes = evaluate_selections(
            &outcome.model,
            &dataset,
            &eval_idx,
            &templates,
            regime.epsilon_gamma,
            a.subsample,
            a.seed,
        )?;
        let stats = selection_stats(&outcomes, templates.len())?;
        let mut text = String::new();
        for o in &outcomes {
            text.push_str(&serde_json::to_string(o)?);
            text.push('\n');
        }
        write_text(&a.out.join("outcomes.jsonl"), &text)?;
        summary["selection_counts"] = json!(stats.counts);
        summary["selection_histogram"] = json!(stats.histogram);
        summary["selection_entropy"] = json!(stats.entropy);
        summary["selection_accuracy"] = json!(stats.accuracy);
        summary["mean_deformed_chamfer"] = json!(stats.mean_deformed_chamfer);
        summary["mean_undeformed_chamfer"] = json!(stats.mean_undeformed_chamfer);
        say(&format!(
            "step {}: selection entropy {:.4}, mean chamfer deformed {:.6} / undeformed {:.6}",
            outcome.adam.step, stats.entropy, stats.mean_deformed_chamfer, stats.mean_undeformed_chamfer
        ));
    }
    write_text(&a.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    manifest.write(&a.out)?;
    Ok(())
}

fn make_dataset(a: &MakeDatasetArgs) -> Result<()> {
    let mut manifest = RunManifest::new("make-dataset", a, Some(a.seed))?;
    let files = template_files(&a.templates_dir)?;
    for f in &files {
        manifest.input(f)?;
    }
    let templates = build_templates(&files, &template_options(&a.template_options))?;
    let spec = DatasetSpec {
        n_per_template: a.n_per_template,
        delta_scale: a.delta_scale,
        feature_dim: a.feature_dim,
        noise: a.noise,
        seed: a.seed,
    };
    let dataset = make_synthetic_dataset(&templates, &spec)?;
    ensure_parent(&a.out)?;
    dataset.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    manifest.write(&output_dir(&a.out))?;
    say(&format!("{} records, feature dimension {}", dataset.len(), dataset.feature_dim));
    Ok(())
}

fn benchmark_templates(a: &BenchmarkTemplatesArgs) -> Result<()> {
    let manifest = RunManifest::new("benchmark-templates", a, None)?;
    create_dir(&a.out)?;
    for (id, mesh) in benchmark_meshes() {
        write_mesh(&mesh, &a.out.join(format!("{id}.obj")))?;
    }
    manifest.write(&a.out)?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let gt = read_mesh(&a.gt)?;
    let pred = read_mesh(&a.pred)?;
    let options = ScoreOptions { n_samples: a.samples, seed: a.seed, resolution: a.resolution, emd_points: a.emd_points };
    let report = report_scores(&gt, &pred, &options)?;
    let text = serde_json::to_string_pretty(&report)?;
    say(&report.triple_string());
    say(&text);
    if let Some(out) = &a.out {
        let mut manifest = RunManifest::new("eval", a, Some(a.seed))?;
        manifest.input(&a.gt)?;
        manifest.input(&a.pred)?;
        ensure_parent(out)?;
        write_text(out, &(text + "\n"))?;
        manifest.write(&output_dir(out))?;
    }
    Ok(())
}

fn transfer_labels(a: &TransferLabelsArgs) -> Result<()> {
    let mut manifest = RunManifest::new("transfer-labels", a, None)?;
    manifest.input(&a.template_mesh)?;
    manifest.input(&a.template_labels)?;
    manifest.input(&a.delta)?;
    let mesh = read_mesh(&a.template_mesh)?;
    let cloud: PointCloud =
        load_cloud_csv(&a.template_labels).with_context(|| format!("loading {}", a.template_labels.display()))?;
    let Some(labels) = cloud.labels() else {
        return Err(Error::DimensionMismatch(format!("{}: no label column", a.template_labels.display())).into());
    };
    let (delta, lattice) = resolve_lattice(&mesh, &a.delta, a.lattice_degrees, a.padding)?;
    let basis = decompose(&lattice, cloud.points());
    let out = apply_deformation(&basis, &lattice, &delta, Some(labels))?;
    ensure_parent(&a.out)?;
    save_cloud_csv(&out, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    manifest.write(&output_dir(&a.out))?;
    Ok(())
}

fn voxelize_cmd(a: &VoxelizeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("voxelize", a, None)?;
    manifest.input(&a.mesh)?;
    let mesh = read_mesh(&a.mesh)?;
    mesh.ensure_nonempty()?;
    let frame = VoxelFrame::around(mesh.vertices(), a.resolution, a.margin)?;
    let grid = voxelize(&mesh, a.resolution, Some(frame))?;
    ensure_parent(&a.out)?;
    save_voxels(&grid, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    manifest.write(&output_dir(&a.out))?;
    say(&format!(
        "{} of {} cells occupied",
        grid.occupied_count(),
        a.resolution * a.resolution * a.resolution
    ));
    Ok(())
}

fn run_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_id(path))
}

fn read_outcomes(path: &Path) -> Result<Vec<SelectionOutcome>> {
    let text = fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                anyhow::Error::from(Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
            })
        })
        .collect()
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut manifest = RunManifest::new("report", a, None)?;
    if !a.name.is_empty() && a.name.len() != a.log.len() {
        return Err(Error::InvalidArgument("give one --name per --log".into()).into());
    }
    let names: Vec<String> =
        if a.name.is_empty() { a.log.iter().map(|p| run_name(p)).collect() } else { a.name.clone() };

    let mut columns = Vec::new();
    let mut runs = Vec::new();
    for (path, name) in a.log.iter().zip(&names) {
        manifest.input(path)?;
        let text = fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
        let mut log = parse_log(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(n) = a.last {
            log.drain(..log.len().saturating_sub(n));
        }
        let counts = selections_from_log(&log).with_context(|| format!("{}", path.display()))?;
        let (histogram, entropy) = sorted_histogram(&counts);
        runs.push(json!({"name": name, "log": path, "records": log.len(), "counts": counts,
                         "histogram": histogram, "entropy": entropy}));
        columns.push((name.clone(), histogram, entropy));
    }

    let rows = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    let mut csv = String::from("rank");
    for (name, _, _) in &columns {
        let _ = write!(csv, ",{name}");
    }
    csv.push('\n');
    for r in 0..rows {
        let _ = write!(csv, "{}", r + 1);
        for (_, h, _) in &columns {
            match h.get(r) {
                Some(v) => {
                    let _ = write!(csv, ",{v}");
                }
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    csv.push_str("entropy");
    for (_, _, e) in &columns {
        let _ = write!(csv, ",{e}");
    }
    csv.push('\n');

    create_dir(&a.out)?;
    write_text(&a.out.join("selection_histogram.csv"), &csv)?;

    let mut evaluations = Vec::new();
    if !a.outcomes.is_empty() {
        let mut cdf = String::from("run,curve,chamfer,fraction\n");
        for (k, path) in a.outcomes.iter().enumerate() {
            manifest.input(path)?;
            let outcomes = read_outcomes(path)?;
            let templates = outcomes.iter().map(|o| o.selected.max(o.truth) + 1).max().unwrap_or(0);
            let stats = selection_stats(&outcomes, templates).with_context(|| format!("{}", path.display()))?;
            let name = names.get(k).cloned().unwrap_or_else(|| run_name(path));
            for (curve, points) in [("deformed", &stats.deformed_cdf), ("undeformed", &stats.undeformed_cdf)] {
                for (x, f) in points {
                    let _ = writeln!(cdf, "{name},{curve},{x},{f}");
                }
            }
            evaluations.push(json!({"name": name, "outcomes": path, "counts": stats.counts,
                "histogram": stats.histogram, "entropy": stats.entropy, "accuracy": stats.accuracy,
                "mean_deformed_chamfer": stats.mean_deformed_chamfer,
                "mean_undeformed_chamfer": stats.mean_undeformed_chamfer}));
        }
        write_text(&a.out.join("cumulative_chamfer.csv"), &cdf)?;
    }
    let summary = json!({"runs": runs, "evaluations": evaluations});
    write_text(&a.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    manifest.write(&a.out)?;
    for (name, _, e) in &columns {
        say(&format!("{name}: selection entropy {e:.4}"));
    }
    Ok(())
}
