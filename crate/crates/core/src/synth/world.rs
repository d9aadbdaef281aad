use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::PMatrix;
use crate::{CoreError, Result};

/// Shape of the planted prerequisite DAG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// `c0 → c1 → … → c(K−1)`.
    Chain,
    /// `edges` distinct edges consistent with a random concept order.
    Random { edges: usize },
    Explicit { edges: Vec<(usize, usize)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub n_concepts: usize,
    pub n_exercises: usize,
    pub n_students: usize,
    pub topology: Topology,
    /// Abilities are drawn uniformly from this range.
    pub ability_range: (f64, f64),
    /// Initial mastery per concept is drawn uniformly from `[0, initial_mastery_max]`.
    pub initial_mastery_max: f64,
    /// Exercise difficulties are drawn uniformly from this range.
    pub difficulty_range: (f64, f64),
    pub learn_rate: f64,
    /// Exponential decay rate per day.
    pub base_forget_rate: f64,
    /// Fraction of a prerequisite's mean mastery loss passed on to successors.
    pub prerequisite_forget_coupling: f64,
    /// Slope of the correctness sigmoid.
    pub response_scale: f64,
    /// Consecutive correct answers needed to move to the next concept.
    pub advance_streak: usize,
    /// Chance of revisiting a direct prerequisite after a wrong answer.
    pub review_prob: f64,
    /// Chance of revisiting a random earlier concept.
    pub random_review_prob: f64,
    /// Log-normal `(median seconds, sigma)` of gaps between attempts.
    pub gap: (f64, f64),
    /// Log-normal `(median seconds, sigma)` of answer times.
    pub answer_time: (f64, f64),
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_concepts: 10,
            n_exercises: 40,
            n_students: 200,
            topology: Topology::Chain,
            ability_range: (0.2, 1.0),
            initial_mastery_max: 0.2,
            difficulty_range: (0.3, 0.7),
            learn_rate: 0.12,
            base_forget_rate: 0.1,
            prerequisite_forget_coupling: 0.5,
            response_scale: 8.0,
            advance_streak: 3,
            review_prob: 0.5,
            random_review_prob: 0.05,
            gap: (1800.0, 1.5),
            answer_time: (30.0, 0.6),
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Argument(m.to_string()));
        if self.n_concepts == 0 {
            return bad("n_concepts must be positive");
        }
        if self.n_exercises < self.n_concepts {
            return bad("need at least one exercise per concept");
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.ability_range.0) || !unit(self.ability_range.1) || self.ability_range.0 > self.ability_range.1 {
            return bad("ability_range must be an ordered sub-range of [0, 1]");
        }
        if !unit(self.initial_mastery_max) || self.difficulty_range.0 > self.difficulty_range.1 {
            return bad("initial_mastery_max must lie in [0, 1] and difficulty_range be ordered");
        }
        if self.learn_rate < 0.0 || self.base_forget_rate < 0.0 || self.prerequisite_forget_coupling < 0.0 {
            return bad("rates must be non-negative");
        }
        if !unit(self.review_prob) || !unit(self.random_review_prob) {
            return bad("review probabilities must lie in [0, 1]");
        }
        if self.gap.0 <= 0.0 || self.answer_time.0 <= 0.0 || self.gap.1 < 0.0 || self.answer_time.1 < 0.0 {
            return bad("time medians must be positive and sigmas non-negative");
        }
        if self.advance_streak == 0 {
            return bad("advance_streak must be at least 1");
        }
        Ok(())
    }
}

/// A planted ground truth: concept DAG, exercises and student population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub spec: WorldSpec,
    pub edges: Vec<(usize, usize)>,
    /// Concepts in a topological order of `edges`.
    pub order: Vec<usize>,
    pub exercise_concept: Vec<usize>,
    pub difficulty: Vec<f64>,
    pub abilities: Vec<f64>,
    /// Per student, per concept.
    pub initial_mastery: Vec<Vec<f64>>,
}

impl World {
    pub fn p_matrix(&self) -> PMatrix {
        PMatrix::from_edges(self.spec.n_concepts, &self.edges)
    }

    /// Direct prerequisites of each concept.
    pub fn prerequisites(&self) -> Vec<Vec<usize>> {
        let mut pre = vec![Vec::new(); self.spec.n_concepts];
        for &(i, j) in &self.edges {
            pre[j].push(i);
        }
        pre.iter_mut().for_each(|v| v.sort_unstable());
        pre
    }

    pub fn exercises_of(&self, concept: usize) -> Vec<usize> {
        (0..self.exercise_concept.len())
            .filter(|&e| self.exercise_concept[e] == concept)
            .collect()
    }
}

/// Topological order compatible with `edges`, smallest ready concept first;
/// `None` on a cycle.
fn topological_order(k: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0; k];
    for &(_, j) in edges {
        indeg[j] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..k).filter(|&c| indeg[c] == 0).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(c) = ready.pop_first() {
        order.push(c);
        for &(i, j) in edges {
            if i == c {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
    }
    (order.len() == k).then_some(order)
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let k = spec.n_concepts;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges = match &spec.topology {
        Topology::Chain => (1..k).map(|j| (j - 1, j)).collect(),
        Topology::Random { edges } => {
            let capacity = k * (k - 1) / 2;
            if *edges > capacity {
                return Err(CoreError::Argument(format!(
                    "{edges} edges exceed the {capacity} an acyclic graph on {k} concepts allows"
                )));
            }
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rng);
            let pairs: Vec<(usize, usize)> = (0..k)
                .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
                .collect();
            let mut chosen: Vec<(usize, usize)> = index::sample(&mut rng, capacity, *edges)
                .into_iter()
                .map(|i| (perm[pairs[i].0], perm[pairs[i].1]))
                .collect();
            chosen.sort_unstable();
            chosen
        }
        Topology::Explicit { edges } => {
            let mut e = edges.clone();
            if e.iter().any(|&(i, j)| i >= k || j >= k || i == j) {
                return Err(CoreError::Argument("explicit edge out of range or a self loop".into()));
            }
            e.sort_unstable();
            e.dedup();
            e
        }
    };
    let order = topological_order(k, &edges)
        .ok_or_else(|| CoreError::Argument("prerequisite edges contain a cycle".into()))?;

    let exercise_concept: Vec<usize> = (0..spec.n_exercises).map(|e| e % k).collect();
    let (dlo, dhi) = spec.difficulty_range;
    let difficulty = (0..spec.n_exercises)
        .map(|_| if dhi > dlo { rng.random_range(dlo..dhi) } else { dlo })
        .collect();
    let (alo, ahi) = spec.ability_range;
    let abilities = (0..spec.n_students)
        .map(|_| if ahi > alo { rng.random_range(alo..ahi) } else { alo })
        .collect();
    let initial_mastery = (0..spec.n_students)
        .map(|_| {
            (0..k)
                .map(|_| rng.random::<f64>() * spec.initial_mastery_max)
                .collect()
        })
        .collect();
    Ok(World {
        spec: spec.clone(),
        edges,
        order,
        exercise_concept,
        difficulty,
        abilities,
        initial_mastery,
    })
}
