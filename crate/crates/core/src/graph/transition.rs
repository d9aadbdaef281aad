use log::warn;
use serde::{Deserialize, Serialize};

use super::AnswerMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub k: usize,
    /// Min-max normalized answer matrix, row-major.
    pub t_tilde: Vec<f64>,
    /// `t_tilde > threshold`, row-major.
    pub t: Vec<bool>,
    pub threshold: f64,
}

impl TransitionMatrix {
    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        self.t_tilde[i * self.k + j]
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.t[i * self.k + j]
    }
}

/// Min-max normalizes over all k² entries (diagonal included) and keeps
/// entries strictly above the cube of the normalized mean.
pub fn binarize_transitions(a: &AnswerMatrix) -> TransitionMatrix {
    let k = a.k;
    let (min, max) = a
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if k == 0 || max <= min {
        if k > 0 {
            warn!("answer matrix is constant; transition matrix is empty");
        }
        return TransitionMatrix {
            k,
            t_tilde: vec![0.0; k * k],
            t: vec![false; k * k],
            threshold: 0.0,
        };
    }
    let t_tilde: Vec<f64> = a.values.iter().map(|v| (v - min) / (max - min)).collect();
    let threshold = threshold_for(&t_tilde);
    let t = t_tilde.iter().map(|&v| v > threshold).collect();
    TransitionMatrix {
        k,
        t_tilde,
        t,
        threshold,
    }
}

/// Cube of the mean entry.
pub fn threshold_for(t_tilde: &[f64]) -> f64 {
    let mean = t_tilde.iter().sum::<f64>() / t_tilde.len() as f64;
    mean.powi(3)
}
