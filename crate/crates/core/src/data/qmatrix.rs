use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Exercise × concept incidence with zeros lifted to `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QMatrix {
    pub n_exercises: usize,
    pub n_concepts: usize,
    pub gamma: f64,
    /// Row-major `n_exercises × n_concepts`.
    pub entries: Vec<f64>,
    concept_of: Vec<usize>,
}

impl QMatrix {
    pub fn row(&self, exercise: usize) -> &[f64] {
        &self.entries[exercise * self.n_concepts..(exercise + 1) * self.n_concepts]
    }

    /// The concept marked 1 in the exercise's row.
    pub fn concept_of(&self, exercise: usize) -> usize {
        self.concept_of[exercise]
    }

    /// Builds directly from the exercise → concept map.
    pub fn from_concepts(exercise_concept: &[usize], n_concepts: usize, gamma: f64) -> Result<Self> {
        let mut raw = vec![vec![0u8; n_concepts]; exercise_concept.len()];
        for (row, &c) in raw.iter_mut().zip(exercise_concept) {
            if c >= n_concepts {
                return Err(CoreError::Data(format!(
                    "concept index {c} out of range for {n_concepts} concepts"
                )));
            }
            row[c] = 1;
        }
        enhance_q_matrix(&raw, gamma)
    }
}

/// Replaces zeros of a binary incidence with `gamma`; each row needs exactly one 1.
pub fn enhance_q_matrix(raw: &[Vec<u8>], gamma: f64) -> Result<QMatrix> {
    let n_concepts = raw.first().map_or(0, Vec::len);
    let mut entries = Vec::with_capacity(raw.len() * n_concepts);
    let mut concept_of = Vec::with_capacity(raw.len());
    for (i, row) in raw.iter().enumerate() {
        if row.len() != n_concepts {
            return Err(CoreError::Data(format!("Q row {i} has {} columns, expected {n_concepts}", row.len())));
        }
        let ones: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(j, _)| j)
            .collect();
        if ones.len() != 1 || row.iter().any(|&v| v > 1) {
            return Err(CoreError::Data(format!(
                "Q row {i} must be binary with exactly one 1, found {} ones",
                ones.len()
            )));
        }
        concept_of.push(ones[0]);
        entries.extend(row.iter().map(|&v| if v == 1 { 1.0 } else { gamma }));
    }
    Ok(QMatrix {
        n_exercises: raw.len(),
        n_concepts,
        gamma,
        entries,
        concept_of,
    })
}
