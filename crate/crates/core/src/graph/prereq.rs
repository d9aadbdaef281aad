use serde::{Deserialize, Serialize};

use super::TransitionMatrix;

/// Directed prerequisite relation: `has(i, j)` means concept i precedes j.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PMatrix {
    pub k: usize,
    /// Row-major `k × k`.
    pub edges: Vec<bool>,
}

impl PMatrix {
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            edges: vec![false; k * k],
        }
    }

    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Self {
        let mut p = Self::empty(k);
        for &(i, j) in edges {
            if i != j {
                p.edges[i * k + j] = true;
            }
        }
        p
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.k + j]
    }

    /// Concepts `j` with `has(j, concept)`, ascending.
    pub fn prerequisites_of(&self, concept: usize) -> Vec<usize> {
        (0..self.k).filter(|&j| self.has(j, concept)).collect()
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let k = self.k;
        (0..k * k)
            .filter(|&idx| self.edges[idx])
            .map(|idx| (idx / k, idx % k))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }
}

/// Keeps `i → j` only when the transition is one-directional.
pub fn derive_prerequisites(t: &TransitionMatrix) -> PMatrix {
    let k = t.k;
    let mut p = PMatrix::empty(k);
    for i in 0..k {
        for j in 0..k {
            if i != j && t.has(i, j) && !t.has(j, i) {
                p.edges[i * k + j] = true;
            }
        }
    }
    p
}

/// Latest earlier step whose concept is a prerequisite of the concept at `t`.
pub fn nearest_prerequisite_step(concepts: &[usize], t: usize, p: &PMatrix) -> Option<usize> {
    let target = *concepts.get(t)?;
    (0..t).rev().find(|&m| p.has(concepts[m], target))
}
