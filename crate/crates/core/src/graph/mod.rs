//! Concept prerequisite graphs mined from answer transitions, plus the
//! causal forgetting weight that uses them.

mod answer;
mod export;
mod forgetting;
mod prereq;
mod transition;

use serde::{Deserialize, Serialize};

pub use answer::{build_answer_matrix, count_transitions, AnswerMatrix};
pub use export::{
    edges, matrix_csv, relation_report, write_graph, Edge, RelationReport, EDGES_FILE,
    P_MATRIX_FILE, RELATIONS_FILE, T_TILDE_FILE,
};
pub use forgetting::{forgetting_weight, lag_days, ForgettingParams, SECONDS_PER_DAY};
pub use prereq::{derive_prerequisites, nearest_prerequisite_step, PMatrix};
pub use transition::{binarize_transitions, threshold_for, TransitionMatrix};

/// The full construction: answer matrix → transitions → prerequisites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptGraph {
    pub answers: AnswerMatrix,
    pub transitions: TransitionMatrix,
    pub prerequisites: PMatrix,
}

impl ConceptGraph {
    pub fn build(k: usize, streams: &[Vec<(usize, bool)>]) -> Self {
        let answers = build_answer_matrix(k, streams);
        let transitions = binarize_transitions(&answers);
        let prerequisites = derive_prerequisites(&transitions);
        Self {
            answers,
            transitions,
            prerequisites,
        }
    }

    pub fn k(&self) -> usize {
        self.answers.k
    }
}
