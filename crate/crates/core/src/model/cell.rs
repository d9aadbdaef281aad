use cpf_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Registry, ReviewStrategy};
use crate::data::{QMatrix, Step};
use crate::graph::PMatrix;
use crate::Result;

/// Read-only inputs shared by every step of a forward pass.
pub struct CellContext<'a> {
    pub config: &'a ModelConfig,
    pub q: &'a QMatrix,
    pub p: &'a PMatrix,
    pub review: &'a dyn ReviewStrategy,
    pub collect_traces: bool,
}

/// Predicted correctness of `step`, made from the state after `step − 1`.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub step: usize,
    pub y: Var,
    pub label: bool,
}

/// Per-step diagnostics for state export.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    pub exercise: usize,
    pub concept: usize,
    pub correct: bool,
    /// Previous state pooled through the exercise's Q row.
    pub pooled: Vec<f64>,
    pub gain: Vec<f64>,
    pub forgetting_weight: f64,
    pub learning_gate_mean: f64,
    pub forgetting_gate_mean: f64,
    /// Probability assigned to this step before it was observed.
    pub prediction: Option<f64>,
}

#[derive(Debug, Default)]
pub struct SequenceOutput {
    pub predictions: Vec<Prediction>,
    pub traces: Vec<StepTrace>,
    /// Final knowledge state, `n_concepts × d`.
    pub final_state: Option<Var>,
}

/// A recurrent knowledge-state update with its own parameter layout.
pub trait KnowledgeCell: Send + Sync {
    fn name(&self) -> &'static str;

    fn init_params(&self, config: &ModelConfig, rng: &mut ChaCha8Rng) -> ParamStore;

    /// Runs over the valid steps of one sequence.
    fn forward(
        &self,
        tape: &mut Tape<'_>,
        ctx: &CellContext<'_>,
        steps: &[Step],
        dropout: &mut Dropout,
    ) -> Result<SequenceOutput>;
}

pub fn cell_registry() -> Registry<dyn KnowledgeCell> {
    let mut r: Registry<dyn KnowledgeCell> = Registry::new("cell");
    r.register("cpf", || Box::new(super::CpfCell));
    r.register("lpkt", || Box::new(super::LpktCell));
    r
}

/// Inverted dropout with a seeded mask stream; a no-op when `rng` is absent.
pub struct Dropout {
    pub rate: f64,
    pub rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x);
        };
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let (r, c) = tape.shape(x);
        let keep = 1.0 / (1.0 - self.rate);
        let mask = (0..r * c)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        Ok(tape.mask_mul(x, mask)?)
    }
}

/// Adds a Glorot-uniform matrix.
pub(crate) fn glorot(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    store.add(name, Tensor::matrix(rows, cols, data).expect("sized"))
}

pub(crate) fn zero_bias(store: &mut ParamStore, name: &str, cols: usize) -> ParamId {
    store.add(name, Tensor::zeros(vec![1, cols]))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Looks up parameter ids by name, failing on a store of the wrong layout.
pub(crate) fn ids<const N: usize>(store: &ParamStore, names: [&str; N]) -> Result<[ParamId; N]> {
    let mut out = [ParamId(0); N];
    for (o, n) in out.iter_mut().zip(names) {
        *o = store.id(n)?;
    }
    Ok(out)
}
