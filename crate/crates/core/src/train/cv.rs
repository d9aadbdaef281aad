use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_report, MetricsReport};
use super::trainer::{evaluate, train, TrainConfig, TrainOutcome};
use crate::data::{concept_streams, kfold, Dataset, FoldSplit, StudentSequence};
use crate::graph::{ConceptGraph, PMatrix};
use crate::model::{Model, ModelConfig};
use crate::{CoreError, Result};

/// A dataset copy whose difficulty buckets come from one fold's training
/// students, plus the prerequisite graph built from those students.
pub struct FoldData {
    pub dataset: Dataset,
    pub split: FoldSplit,
    pub graph: ConceptGraph,
}

impl FoldData {
    pub fn prepare(dataset: &Dataset, split: FoldSplit) -> Self {
        let mut ds = dataset.clone();
        let table = {
            let train = ds.select(&split.train);
            ds.difficulty_from(&train)
        };
        ds.apply_difficulty(&table);
        let graph = {
            let train = ds.select(&split.train);
            ConceptGraph::build(ds.meta.vocab.n_concepts(), &concept_streams(&train))
        };
        Self {
            dataset: ds,
            split,
            graph,
        }
    }

    pub fn train(&self) -> Vec<&StudentSequence> {
        self.dataset.select(&self.split.train)
    }

    pub fn val(&self) -> Vec<&StudentSequence> {
        self.dataset.select(&self.split.val)
    }

    pub fn test(&self) -> Vec<&StudentSequence> {
        self.dataset.select(&self.split.test)
    }

    /// A freshly initialized model over this fold's vocabulary and graph.
    pub fn model(&self, config: &ModelConfig, seed: u64) -> Result<Model> {
        let cfg = config.clone().with_vocab(&self.dataset.meta);
        let q = self.dataset.meta.vocab.q_matrix(cfg.gamma)?;
        let p: PMatrix = self.graph.prerequisites.clone();
        Model::new(cfg, q, p, seed)
    }

    pub fn fit(&self, config: &ModelConfig, train_cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
        let model = self.model(config, seed)?;
        train(model, &self.train(), &self.val(), train_cfg, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub best_epoch: usize,
    pub val: Option<MetricsReport>,
    pub test: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean: MetricsReport,
}

/// Trains and tests on each of `k` folds with fold-local difficulty and graph.
pub fn cross_validate(
    dataset: &Dataset,
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    let splits = kfold(&dataset.students(), k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for (fold, split) in splits.into_iter().enumerate() {
        let run = || -> Result<FoldReport> {
            let data = FoldData::prepare(dataset, split);
            let outcome = data.fit(config, train_cfg, seed)?;
            let test = evaluate(&outcome.model, &data.test())?;
            info!("fold {fold}: test auc {:?}", test.auc);
            Ok(FoldReport {
                fold,
                best_epoch: outcome.best_epoch,
                val: outcome.best_val,
                test,
            })
        };
        folds.push(run().map_err(|e| CoreError::Fold {
            fold,
            source: Box::new(e),
        })?);
    }
    let tests: Vec<MetricsReport> = folds.iter().map(|f| f.test.clone()).collect();
    Ok(CvReport {
        mean: mean_report(&tests),
        folds,
    })
}

/// One row of the review-window sensitivity table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGridRow {
    pub k_window: usize,
    pub auc: Option<f64>,
    pub acc: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub n_predictions: usize,
}

/// Cross-validates once per review window size.
pub fn review_window_grid(
    dataset: &Dataset,
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    k_folds: usize,
    seed: u64,
    windows: &[usize],
) -> Result<(Vec<KGridRow>, Vec<CvReport>)> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &kw in windows {
        let cfg = ModelConfig {
            review_window: kw,
            ..config.clone()
        };
        let report = cross_validate(dataset, &cfg, train_cfg, k_folds, seed)?;
        let m = &report.mean;
        rows.push(KGridRow {
            k_window: kw,
            auc: m.auc,
            acc: m.acc,
            rmse: m.rmse,
            r2: m.r2,
            n_predictions: m.n_predictions,
        });
        reports.push(report);
    }
    Ok((rows, reports))
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}
