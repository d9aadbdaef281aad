//! Synthetic students with planted prerequisite structure, used as a ground
//! truth for graph recovery and model comparisons.

mod recovery;
mod simulate;
mod world;

pub use recovery::{permutation_null, score_p_recovery, RecoveryReport};
pub use simulate::{concept_id, exercise_id, simulate_log, student_id, GroundTruth, MasteryTracker, SimulatedLog};
pub use world::{generate_world, Topology, World, WorldSpec};
