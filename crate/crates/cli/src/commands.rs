use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use cpf_core::data::{concept_streams, kfold, parse_interactions, write_interactions, Dataset};
use cpf_core::graph::{write_graph, ConceptGraph};
use cpf_core::model::{write_state_csv, Checkpoint, Model, StateRow};
use cpf_core::synth::{generate_world, simulate_log, GroundTruth};
use cpf_core::train::{
    cross_validate as run_cv, evaluate, gradcheck_model, review_window_grid, write_csv_rows, write_training_log,
    FoldData, MetricsReport,
};
use cpf_core::RunConfig;
use log::info;
use serde::Serialize;

use crate::Flags;

fn input(flags: &Flags) -> anyhow::Result<&Path> {
    flags.input.as_deref().context("--in is required")
}

/// Creates the output directory and records the resolved configuration in it.
fn output(flags: &Flags, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = flags.output.clone().context("--out is required")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write_resolved(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// A dataset directory, or an interaction CSV windowed on the fly.
fn load_dataset(path: &Path, cfg: &RunConfig) -> anyhow::Result<Dataset> {
    if path.is_dir() {
        return Ok(Dataset::read(path)?);
    }
    let log = parse_interactions(path, &cfg.ingest)?;
    ensure!(!log.records.is_empty(), "{} has no usable records", path.display());
    Ok(Dataset::from_records(&log.records, &cfg.discretizer, cfg.window_len)?)
}

fn fold_data(dataset: &Dataset, cfg: &RunConfig, seed: u64) -> anyhow::Result<FoldData> {
    let mut splits = kfold(&dataset.students(), cfg.folds, seed)?;
    ensure!(cfg.fold < splits.len(), "fold {} out of range for {} folds", cfg.fold, cfg.folds);
    Ok(FoldData::prepare(dataset, splits.swap_remove(cfg.fold)))
}

#[derive(Serialize)]
struct MetricsRow {
    fold: usize,
    epoch: usize,
    split: &'static str,
    auc: Option<f64>,
    acc: f64,
    rmse: f64,
    r2: Option<f64>,
    n_predictions: usize,
}

impl MetricsRow {
    fn new(fold: usize, epoch: usize, split: &'static str, m: &MetricsReport) -> Self {
        Self {
            fold,
            epoch,
            split,
            auc: m.auc,
            acc: m.acc,
            rmse: m.rmse,
            r2: m.r2,
            n_predictions: m.n_predictions,
        }
    }
}

fn load_checkpoint(flags: &Flags) -> anyhow::Result<Checkpoint> {
    let path = flags.checkpoint.as_deref().context("--checkpoint is required")?;
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn ingest(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let path = input(flags)?;
    let log = parse_interactions(path, &cfg.ingest)?;
    ensure!(!log.records.is_empty(), "{} has no usable records", path.display());
    let dataset = Dataset::from_records(&log.records, &cfg.discretizer, cfg.window_len)?;
    let out = output(flags, cfg)?;
    dataset.write(&out)?;
    let report = serde_json::json!({
        "records": log.records.len(),
        "dropped": log.dropped,
        "students": dataset.students().len(),
        "exercises": dataset.meta.vocab.n_exercises(),
        "concepts": dataset.meta.vocab.n_concepts(),
        "sequences": dataset.sequences.len(),
    });
    write_json(&out.join("ingest_report.json"), &report)?;
    info!("{} records ({} dropped) → {} windows", log.records.len(), log.dropped, dataset.sequences.len());
    Ok(())
}

pub fn build_graph(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let dataset = load_dataset(input(flags)?, cfg)?;
    let seqs: Vec<_> = dataset.sequences.iter().collect();
    let graph = ConceptGraph::build(dataset.meta.vocab.n_concepts(), &concept_streams(&seqs));
    let out = output(flags, cfg)?;
    write_graph(&graph, &dataset.meta.vocab.concepts, &out)?;
    info!(
        "{} concepts, {} prerequisite edges, threshold {:.6}",
        graph.k(),
        graph.prerequisites.num_edges(),
        graph.transitions.threshold
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let dataset = load_dataset(input(flags)?, cfg)?;
    let data = fold_data(&dataset, cfg, cfg.seed)?;
    let out = output(flags, cfg)?;
    let outcome = data.fit(&cfg.model, &cfg.train, cfg.seed)?;
    let test = evaluate(&outcome.model, &data.test())?;
    info!("best epoch {}, test auc {:?}", outcome.best_epoch, test.auc);

    Checkpoint::from_model(&outcome.model, cfg.seed, outcome.best_epoch, Some(&outcome.adam))
        .save(&out.join("checkpoint.json"))?;
    write_training_log(&out.join("training_log.csv"), &outcome.log)?;
    let mut rows = Vec::new();
    if let Some(val) = &outcome.best_val {
        rows.push(MetricsRow::new(cfg.fold, outcome.best_epoch, "val", val));
    }
    rows.push(MetricsRow::new(cfg.fold, outcome.best_epoch, "test", &test));
    write_json(&out.join("metrics.json"), &rows)?;
    Ok(())
}

pub fn eval(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(flags)?;
    let dataset = load_dataset(input(flags)?, cfg)?;
    ensure!(
        ckpt.config.n_exercises == dataset.meta.vocab.n_exercises()
            && ckpt.config.n_concepts == dataset.meta.vocab.n_concepts(),
        "checkpoint vocabulary does not match the dataset"
    );
    // The split must match the one the checkpoint was trained on.
    let data = fold_data(&dataset, cfg, ckpt.seed)?;
    let epoch = ckpt.epoch;
    let (model, _) = ckpt.into_model()?;
    let test = evaluate(&model, &data.test())?;
    info!("test auc {:?}, acc {:.4}, rmse {:.4}", test.auc, test.acc, test.rmse);
    let out = output(flags, cfg)?;
    write_json(&out.join("metrics.json"), &[MetricsRow::new(cfg.fold, epoch, "test", &test)])?;
    Ok(())
}

pub fn cross_validate(cfg: &RunConfig, flags: &Flags, k_grid: Option<Vec<usize>>) -> anyhow::Result<()> {
    let dataset = load_dataset(input(flags)?, cfg)?;
    let mut cfg = cfg.clone();
    if let Some(grid) = k_grid {
        ensure!(!grid.is_empty(), "--k-grid needs at least one value");
        cfg.k_grid = grid;
        let out = output(flags, &cfg)?;
        let (rows, reports) = review_window_grid(&dataset, &cfg.model, &cfg.train, cfg.folds, cfg.seed, &cfg.k_grid)?;
        write_csv_rows(&out.join("k_sensitivity.csv"), &rows)?;
        let detail: Vec<_> = cfg
            .k_grid
            .iter()
            .zip(&reports)
            .map(|(k, r)| serde_json::json!({ "k_window": k, "report": r }))
            .collect();
        write_json(&out.join("cv_reports.json"), &detail)?;
        return Ok(());
    }
    let out = output(flags, &cfg)?;
    let report = run_cv(&dataset, &cfg.model, &cfg.train, cfg.folds, cfg.seed)?;
    info!("mean test auc {:?}", report.mean.auc);
    let rows: Vec<MetricsRow> = report
        .folds
        .iter()
        .map(|f| MetricsRow::new(f.fold, f.best_epoch, "test", &f.test))
        .collect();
    write_json(&out.join("metrics.json"), &rows)?;
    write_json(&out.join("cv_report.json"), &report)?;
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let dataset = match &flags.input {
        Some(p) => load_dataset(p, cfg)?,
        None => {
            let world = generate_world(&cfg.world)?;
            let log = simulate_log(&world, cfg.steps_per_student);
            Dataset::from_records(&log.records, &cfg.discretizer, cfg.window_len)?
        }
    };
    let seqs: Vec<_> = dataset
        .sequences
        .iter()
        .filter(|s| s.num_predictions() > 0)
        .take(cfg.gradcheck.sequences)
        .collect();
    ensure!(!seqs.is_empty(), "no window with at least two valid steps");
    let graph = ConceptGraph::build(dataset.meta.vocab.n_concepts(), &concept_streams(&seqs));
    let model_cfg = cfg.model.clone().with_vocab(&dataset.meta);
    let q = dataset.meta.vocab.q_matrix(model_cfg.gamma)?;
    let mut model = Model::new(model_cfg, q, graph.prerequisites.clone(), cfg.seed)?;
    let g = &cfg.gradcheck;
    let report = gradcheck_model(&mut model, &seqs, cfg.train.l2_lambda, g.h, g.tol)?;
    for b in &report.blocks {
        info!(
            "{:<18} {:>7} entries  max rel err {:.3e}  {}",
            b.name,
            b.entries,
            b.max_rel_error,
            if b.passed { "ok" } else { "FAIL" }
        );
    }
    if flags.output.is_some() {
        let out = output(flags, cfg)?;
        write_json(&out.join("gradcheck.json"), &report)?;
    }
    if !report.passed() {
        bail!("gradient check failed: max relative error {:.3e}", report.max_rel_error());
    }
    info!("all {} blocks within {:.0e}", report.blocks.len(), g.tol);
    Ok(())
}

pub fn simulate(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let world = generate_world(&cfg.world)?;
    let log = simulate_log(&world, cfg.steps_per_student);
    let out = output(flags, cfg)?;
    let path = out.join("interactions.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_interactions(std::io::BufWriter::new(file), &log.records)?;
    GroundTruth::new(&world).write(&out.join("ground_truth.json"))?;
    info!("{} students, {} interactions", world.spec.n_students, log.records.len());
    Ok(())
}

pub fn export_states(cfg: &RunConfig, flags: &Flags) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(flags)?;
    let dataset = load_dataset(input(flags)?, cfg)?;
    let data = fold_data(&dataset, cfg, ckpt.seed)?;
    let (model, _) = ckpt.into_model()?;
    let mut rows = Vec::new();
    for seq in &data.dataset.sequences {
        for t in model.trace(seq)? {
            rows.push(StateRow::new(&seq.student_id, seq.window_index, &t));
        }
    }
    let out = output(flags, cfg)?;
    write_state_csv(&out.join("states.csv"), &rows)?;
    info!("{} step traces", rows.len());
    Ok(())
}
