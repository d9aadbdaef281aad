use std::path::Path;

use serde::Serialize;

use super::StepTrace;
use crate::{CoreError, Result};

/// One CSV row of exported per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateRow {
    pub student_id: String,
    pub window: usize,
    pub step: usize,
    pub exercise: usize,
    pub concept: usize,
    pub correct: u8,
    pub prediction: Option<f64>,
    pub forgetting_weight: f64,
    pub learning_gate_mean: f64,
    pub forgetting_gate_mean: f64,
    pub pooled_norm: f64,
    pub gain_mean: f64,
}

impl StateRow {
    pub fn new(student_id: &str, window: usize, t: &StepTrace) -> Self {
        Self {
            student_id: student_id.to_string(),
            window,
            step: t.step,
            exercise: t.exercise,
            concept: t.concept,
            correct: u8::from(t.correct),
            prediction: t.prediction,
            forgetting_weight: t.forgetting_weight,
            learning_gate_mean: t.learning_gate_mean,
            forgetting_gate_mean: t.forgetting_gate_mean,
            pooled_norm: t.pooled.iter().map(|x| x * x).sum::<f64>().sqrt(),
            gain_mean: t.gain.iter().sum::<f64>() / t.gain.len().max(1) as f64,
        }
    }
}

pub fn write_state_csv(path: &Path, rows: &[StateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}
