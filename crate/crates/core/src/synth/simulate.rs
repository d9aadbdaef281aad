use std::fs;
use std::path::Path;

use cpf_autodiff::sigmoid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::World;
use crate::data::InteractionRecord;
use crate::graph::SECONDS_PER_DAY;
use crate::{CoreError, Result};

/// Latent per-concept mastery of one student under the oracle dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct MasteryTracker {
    pub mastery: Vec<f64>,
    prerequisites: Vec<Vec<usize>>,
    learn_rate: f64,
    forget_rate: f64,
    coupling: f64,
}

impl MasteryTracker {
    pub fn new(initial: Vec<f64>, prerequisites: Vec<Vec<usize>>, learn_rate: f64, forget_rate: f64, coupling: f64) -> Self {
        assert_eq!(initial.len(), prerequisites.len());
        Self {
            mastery: initial,
            prerequisites,
            learn_rate,
            forget_rate,
            coupling,
        }
    }

    pub fn for_student(world: &World, student: usize) -> Self {
        let s = &world.spec;
        Self::new(
            world.initial_mastery[student].clone(),
            world.prerequisites(),
            s.learn_rate,
            s.base_forget_rate,
            s.prerequisite_forget_coupling,
        )
    }

    /// Exponential decay over `days`; each concept then loses `coupling` times
    /// the mean decay loss of its direct prerequisites.
    pub fn elapse(&mut self, days: f64) {
        let factor = (-self.forget_rate * days.max(0.0)).exp();
        let loss: Vec<f64> = self.mastery.iter().map(|m| m - m * factor).collect();
        for m in &mut self.mastery {
            *m *= factor;
        }
        if self.coupling == 0.0 {
            return;
        }
        for (c, pre) in self.prerequisites.iter().enumerate() {
            if pre.is_empty() {
                continue;
            }
            let drag = self.coupling * pre.iter().map(|&j| loss[j]).sum::<f64>() / pre.len() as f64;
            self.mastery[c] = (self.mastery[c] - drag).max(0.0);
        }
    }

    pub fn practice(&mut self, concept: usize, ability: f64) {
        let m = &mut self.mastery[concept];
        *m = (*m + ability * self.learn_rate).min(1.0);
    }

    pub fn p_correct(&self, concept: usize, difficulty: f64, scale: f64) -> f64 {
        sigmoid(scale * (self.mastery[concept] - difficulty))
    }
}

/// Simulated interactions with the latent state that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedLog {
    /// Sorted by student then time.
    pub records: Vec<InteractionRecord>,
    /// Per student `(concept, correct)` in world concept indices.
    pub streams: Vec<Vec<(usize, bool)>>,
    /// Per student, the correctness probability each answer was drawn with.
    pub p_correct: Vec<Vec<f64>>,
    pub final_mastery: Vec<Vec<f64>>,
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

pub fn student_id(world: &World, s: usize) -> String {
    format!("s{s:0w$}", w = width(world.spec.n_students))
}

pub fn exercise_id(world: &World, e: usize) -> String {
    format!("e{e:0w$}", w = width(world.spec.n_exercises))
}

/// Zero-padded so that sorted names follow concept indices.
pub fn concept_id(world: &World, c: usize) -> String {
    format!("c{c:0w$}", w = width(world.spec.n_concepts))
}

fn log_normal((median, sigma): (f64, f64)) -> LogNormal<f64> {
    LogNormal::new(median.ln(), sigma).expect("validated spec")
}

struct StudentRun {
    records: Vec<InteractionRecord>,
    stream: Vec<(usize, bool)>,
    p_correct: Vec<f64>,
    mastery: Vec<f64>,
}

/// Curriculum walk of one student: work on the frontier concept in
/// topological order, move on after a streak of correct answers, revisit a
/// direct prerequisite after a wrong answer, and occasionally revisit any
/// earlier concept.
fn simulate_student(world: &World, student: usize, steps: usize, exercises: &[Vec<usize>], prereqs: &[Vec<usize>]) -> StudentRun {
    let spec = &world.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(student as u64 + 1);
    let gap = log_normal(spec.gap);
    let answer = log_normal(spec.answer_time);
    let ability = world.abilities[student];
    let mut tracker = MasteryTracker::for_student(world, student);
    let sid = student_id(world, student);

    let mut pos = 0;
    let mut streak = 0;
    let mut missed_frontier = false;
    let mut ts = 0.0;
    let mut records = Vec::with_capacity(steps);
    let mut stream = Vec::with_capacity(steps);
    let mut probs = Vec::with_capacity(steps);
    for t in 0..steps {
        let frontier = world.order[pos];
        let concept = if missed_frontier && !prereqs[frontier].is_empty() && rng.random::<f64>() < spec.review_prob {
            prereqs[frontier][rng.random_range(0..prereqs[frontier].len())]
        } else if pos > 0 && rng.random::<f64>() < spec.random_review_prob {
            world.order[rng.random_range(0..pos)]
        } else {
            frontier
        };
        if t > 0 {
            let dt = gap.sample(&mut rng);
            tracker.elapse(dt / SECONDS_PER_DAY);
            ts += dt;
        }
        let pool = &exercises[concept];
        let exercise = pool[rng.random_range(0..pool.len())];
        let p = tracker.p_correct(concept, world.difficulty[exercise], spec.response_scale);
        let correct = rng.random::<f64>() < p;
        let answer_time = answer.sample(&mut rng);
        records.push(InteractionRecord {
            student_id: sid.clone(),
            exercise_id: exercise_id(world, exercise),
            concept_id: concept_id(world, concept),
            correct,
            answer_time,
            timestamp: ts,
        });
        stream.push((concept, correct));
        probs.push(p);
        ts += answer_time;
        tracker.practice(concept, ability);

        if concept == frontier {
            streak = if correct { streak + 1 } else { 0 };
            missed_frontier = !correct;
            if streak >= spec.advance_streak && pos + 1 < world.order.len() {
                pos += 1;
                streak = 0;
            }
        } else {
            missed_frontier = false;
        }
    }
    StudentRun {
        records,
        stream,
        p_correct: probs,
        mastery: tracker.mastery,
    }
}

/// Simulates every student for `steps_per_student` attempts.
pub fn simulate_log(world: &World, steps_per_student: usize) -> SimulatedLog {
    let exercises: Vec<Vec<usize>> = (0..world.spec.n_concepts).map(|c| world.exercises_of(c)).collect();
    let prereqs = world.prerequisites();
    let runs: Vec<StudentRun> = (0..world.spec.n_students)
        .into_par_iter()
        .map(|s| simulate_student(world, s, steps_per_student, &exercises, &prereqs))
        .collect();
    let mut log = SimulatedLog {
        records: Vec::new(),
        streams: Vec::new(),
        p_correct: Vec::new(),
        final_mastery: Vec::new(),
    };
    for r in runs {
        log.records.extend(r.records);
        log.streams.push(r.stream);
        log.p_correct.push(r.p_correct);
        log.final_mastery.push(r.mastery);
    }
    log
}

/// Planted facts written next to a simulated log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub concepts: Vec<String>,
    /// `(prerequisite, successor)` concept ids.
    pub edges: Vec<(String, String)>,
    pub abilities: Vec<(String, f64)>,
    pub exercise_concept: Vec<(String, String)>,
    pub difficulty: Vec<(String, f64)>,
    pub world: World,
}

impl GroundTruth {
    pub fn new(world: &World) -> Self {
        let c = |i: usize| concept_id(world, i);
        Self {
            concepts: (0..world.spec.n_concepts).map(c).collect(),
            edges: world.edges.iter().map(|&(i, j)| (c(i), c(j))).collect(),
            abilities: world
                .abilities
                .iter()
                .enumerate()
                .map(|(s, &a)| (student_id(world, s), a))
                .collect(),
            exercise_concept: world
                .exercise_concept
                .iter()
                .enumerate()
                .map(|(e, &k)| (exercise_id(world, e), c(k)))
                .collect(),
            difficulty: world
                .difficulty
                .iter()
                .enumerate()
                .map(|(e, &d)| (exercise_id(world, e), d))
                .collect(),
            world: world.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| CoreError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
