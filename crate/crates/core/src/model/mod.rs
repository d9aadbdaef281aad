//! Recurrent knowledge cells and the model wrapper that runs them.
//!
//! Cells and review strategies are looked up by name, so a configuration can
//! switch between the full cell (`cpf`) and the plain learning-process cell
//! (`lpkt`) without code changes.

mod cell;
mod checkpoint;
mod config;
mod cpf;
mod export;
mod lpkt;
mod registry;
mod review;

use cpf_autodiff::{ParamStore, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cell::{cell_registry, CellContext, Dropout, KnowledgeCell, Prediction, SequenceOutput, StepTrace};
pub use checkpoint::Checkpoint;
pub use config::{Ablation, ModelConfig};
pub use cpf::CpfCell;
pub use export::{write_state_csv, StateRow};
pub use lpkt::{lpkt_step, LpktCell, LpktStep, LpktWeights};
pub use registry::Registry;
pub use review::{attention_weights, review_registry, AttentionOverPast, Literal, ReviewStrategy};

use crate::data::{QMatrix, Step, StudentSequence};
use crate::graph::PMatrix;
use crate::{CoreError, Result};

/// A cell, its parameters and the fixed Q/P matrices it reads.
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub q: QMatrix,
    pub p: PMatrix,
    cell: Box<dyn KnowledgeCell>,
    review: Box<dyn ReviewStrategy>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("cell", &self.cell.name())
            .field("review", &self.review.name())
            .field("params", &self.params.num_values())
            .finish()
    }
}

impl Model {
    /// Builds a model with freshly initialized parameters.
    pub fn new(config: ModelConfig, q: QMatrix, p: PMatrix, seed: u64) -> Result<Self> {
        let cell = cell_registry().create(&config.mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        config.validate()?;
        let params = cell.init_params(&config, &mut rng);
        Self::assemble(config, q, p, params, cell)
    }

    /// Wraps existing parameters, checking their layout against the cell.
    pub fn from_parts(config: ModelConfig, q: QMatrix, p: PMatrix, params: ParamStore) -> Result<Self> {
        let cell = cell_registry().create(&config.mode)?;
        config.validate()?;
        let template = cell.init_params(&config, &mut ChaCha8Rng::seed_from_u64(0));
        if template.len() != params.len() {
            return Err(CoreError::Config(format!(
                "parameter count {} does not match `{}` layout ({})",
                params.len(),
                config.mode,
                template.len()
            )));
        }
        for ((_, want), (_, got)) in template.iter().zip(params.iter()) {
            if want.name != got.name || want.tensor.shape() != got.tensor.shape() {
                return Err(CoreError::Config(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    got.name,
                    got.tensor.shape(),
                    want.name,
                    want.tensor.shape()
                )));
            }
        }
        Self::assemble(config, q, p, params, cell)
    }

    fn assemble(config: ModelConfig, q: QMatrix, p: PMatrix, params: ParamStore, cell: Box<dyn KnowledgeCell>) -> Result<Self> {
        let review = review_registry().create(&config.review_mode)?;
        if q.n_exercises != config.n_exercises || q.n_concepts != config.n_concepts {
            return Err(CoreError::Config(format!(
                "Q matrix is {}x{}, config expects {}x{}",
                q.n_exercises, q.n_concepts, config.n_exercises, config.n_concepts
            )));
        }
        if p.k != config.n_concepts {
            return Err(CoreError::Config(format!(
                "P matrix has {} concepts, config expects {}",
                p.k, config.n_concepts
            )));
        }
        Ok(Self {
            config,
            params,
            q,
            p,
            cell,
            review,
        })
    }

    pub fn cell_name(&self) -> &'static str {
        self.cell.name()
    }

    pub fn tape(&self) -> Tape<'_> {
        Tape::new(&self.params)
    }

    /// Records the forward pass over `steps` on `tape`, which must read this
    /// model's parameters.
    pub fn forward(&self, tape: &mut Tape<'_>, steps: &[Step], dropout: &mut Dropout, traces: bool) -> Result<SequenceOutput> {
        let ctx = CellContext {
            config: &self.config,
            q: &self.q,
            p: &self.p,
            review: self.review.as_ref(),
            collect_traces: traces,
        };
        self.cell.forward(tape, &ctx, steps, dropout)
    }

    /// `(step, probability, label)` for every predicted step, without dropout.
    pub fn predict(&self, seq: &StudentSequence) -> Result<Vec<(usize, f64, bool)>> {
        let mut tape = self.tape();
        let out = self.forward(&mut tape, seq.valid_steps(), &mut Dropout::off(), false)?;
        Ok(out
            .predictions
            .iter()
            .map(|p| (p.step, tape.scalar_value(p.y), p.label))
            .collect())
    }

    pub fn trace(&self, seq: &StudentSequence) -> Result<Vec<StepTrace>> {
        let mut tape = self.tape();
        Ok(self.forward(&mut tape, seq.valid_steps(), &mut Dropout::off(), true)?.traces)
    }
}
