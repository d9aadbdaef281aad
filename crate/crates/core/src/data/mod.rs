//! Interaction logs → windowed, feature-complete student sequences.

mod dataset;
mod discretize;
mod features;
mod folds;
mod qmatrix;
mod records;
mod window;

pub use dataset::{concept_streams, Dataset, DatasetMeta, Vocab, META_FILE, SEQUENCES_FILE};
pub use discretize::{discretize, DiscretizerSpec, TimeFeatures};
pub use features::{compute_exercise_difficulty, compute_running_accuracy, DifficultyTable};
pub use folds::{kfold, FoldSplit};
pub use qmatrix::{enhance_q_matrix, QMatrix};
pub use records::{
    group_by_student, parse_interactions, parse_interactions_from_reader, sort_records,
    write_interactions, ColumnMap, IngestConfig, InteractionRecord, ParsedLog,
};
pub use window::{make_windows, Step, StudentSequence};
