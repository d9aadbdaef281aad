use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{ConceptGraph, PMatrix};
use crate::train::auc;

/// How well a derived graph matches a planted one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// AUC of normalized transition scores, true edges against all other
    /// ordered pairs; absent without true edges.
    pub edge_auc: Option<f64>,
    /// Absent when the derived graph has no edges.
    pub precision: Option<f64>,
    /// Absent without true edges.
    pub recall: Option<f64>,
    pub n_true: usize,
    pub n_derived: usize,
    pub true_positives: usize,
}

pub fn score_p_recovery(truth: &PMatrix, graph: &ConceptGraph) -> RecoveryReport {
    let k = truth.k;
    assert_eq!(k, graph.k(), "graph and truth cover different concept sets");
    let mut pairs = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                pairs.push((graph.transitions.normalized(i, j), truth.has(i, j)));
            }
        }
    }
    let derived = &graph.prerequisites;
    let n_true = truth.num_edges();
    let n_derived = derived.num_edges();
    let tp = truth.edge_list().iter().filter(|&&(i, j)| derived.has(i, j)).count();
    RecoveryReport {
        edge_auc: auc(&pairs),
        precision: (n_derived > 0).then(|| tp as f64 / n_derived as f64),
        recall: (n_true > 0).then(|| tp as f64 / n_true as f64),
        n_true,
        n_derived,
        true_positives: tp,
    }
}

/// Mean edge-score AUC after relabeling the log's concepts by random
/// permutations, scored against the original truth.
pub fn permutation_null(truth: &PMatrix, streams: &[Vec<(usize, bool)>], n_perms: usize, seed: u64) -> Option<f64> {
    let k = truth.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut n = 0;
    for _ in 0..n_perms {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<Vec<(usize, bool)>> = streams
            .iter()
            .map(|s| s.iter().map(|&(c, ok)| (perm[c], ok)).collect())
            .collect();
        let graph = ConceptGraph::build(k, &relabeled);
        if let Some(a) = score_p_recovery(truth, &graph).edge_auc {
            total += a;
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}
