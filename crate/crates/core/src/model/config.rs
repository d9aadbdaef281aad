use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetMeta;
use crate::graph::ForgettingParams;
use crate::{CoreError, Result};

/// Component switched off in an ablation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// No concept-level forgetting: `w_f = 1`, prerequisite vector zero.
    #[serde(alias = "P")]
    NoPMatrix,
    /// No student ability: `s_t = 0` everywhere.
    #[serde(alias = "I")]
    NoPersonalization,
    /// Learning module without ability input and without the review bonus.
    #[serde(alias = "L")]
    NoLearningModule,
    /// No forgetting: gate fixed at 1, `w_f = 1`.
    #[serde(alias = "FP")]
    NoForgetting,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoPMatrix,
        Ablation::NoPersonalization,
        Ablation::NoLearningModule,
        Ablation::NoForgetting,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoPMatrix => "P",
            Ablation::NoPersonalization => "I",
            Ablation::NoLearningModule => "L",
            Ablation::NoForgetting => "FP",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Ablation {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Ablation::Full,
            "P" | "no_p_matrix" => Ablation::NoPMatrix,
            "I" | "no_personalization" => Ablation::NoPersonalization,
            "L" | "no_learning_module" => Ablation::NoLearningModule,
            "FP" | "no_forgetting" => Ablation::NoForgetting,
            other => return Err(CoreError::Config(format!("unknown ablation `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Embedding and state width.
    pub d: usize,
    /// Answer embedding width.
    pub d_a: usize,
    /// Number of recent pooled states attended over; 0 disables review.
    pub review_window: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub forgetting: ForgettingParams,
    /// Q-matrix value for concepts an exercise does not target.
    pub gamma: f64,
    /// P-matrix value for non-edges in the prerequisite vector; 0 keeps it binary.
    pub rho: f64,
    pub dropout: f64,
    pub ablation: Ablation,
    /// Registered cell name, `cpf` or `lpkt`.
    pub mode: String,
    /// Registered review strategy name.
    pub review_mode: String,

    // Vocabulary sizes, filled from the dataset.
    pub n_exercises: usize,
    pub n_concepts: usize,
    pub answer_time_vocab: usize,
    pub interval_time_vocab: usize,
    pub difficulty_buckets: usize,
    pub accuracy_buckets: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 128,
            d_a: 50,
            review_window: 50,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            mu: 1.0 / 3.0,
            forgetting: ForgettingParams::default(),
            gamma: 0.03,
            rho: 0.0,
            dropout: 0.2,
            ablation: Ablation::Full,
            mode: "cpf".into(),
            review_mode: "attention_over_past".into(),
            n_exercises: 0,
            n_concepts: 0,
            answer_time_vocab: 0,
            interval_time_vocab: 0,
            difficulty_buckets: 0,
            accuracy_buckets: 0,
        }
    }
}

impl ModelConfig {
    /// Copies vocabulary sizes from a dataset.
    pub fn with_vocab(mut self, meta: &DatasetMeta) -> Self {
        self.n_exercises = meta.vocab.n_exercises();
        self.n_concepts = meta.vocab.n_concepts();
        self.answer_time_vocab = meta.discretizer.answer_time_vocab();
        self.interval_time_vocab = meta.discretizer.interval_time_vocab();
        self.difficulty_buckets = meta.discretizer.difficulty_buckets;
        self.accuracy_buckets = meta.discretizer.accuracy_buckets;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_a == 0 {
            return Err(CoreError::Config("d and d_a must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.forgetting.delta <= 0.0 {
            return Err(CoreError::Config("forgetting delta must be positive".into()));
        }
        if self.gamma < 0.0 || self.rho < 0.0 {
            return Err(CoreError::Config("gamma and rho must be non-negative".into()));
        }
        let vocab = [
            ("n_exercises", self.n_exercises),
            ("n_concepts", self.n_concepts),
            ("answer_time_vocab", self.answer_time_vocab),
            ("interval_time_vocab", self.interval_time_vocab),
            ("difficulty_buckets", self.difficulty_buckets),
            ("accuracy_buckets", self.accuracy_buckets),
        ];
        for (name, v) in vocab {
            if v == 0 {
                return Err(CoreError::Config(format!("{name} is zero; load vocabulary first")));
            }
        }
        Ok(())
    }
}
