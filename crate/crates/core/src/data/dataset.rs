use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    compute_exercise_difficulty, compute_running_accuracy, discretize, group_by_student,
    make_windows, DifficultyTable, DiscretizerSpec, InteractionRecord, QMatrix, Step,
    StudentSequence,
};
use crate::{CoreError, Result};

pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const META_FILE: &str = "meta.json";

/// Index ↔ identifier maps. Exercises map to exactly one concept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub exercises: Vec<String>,
    pub concepts: Vec<String>,
    pub exercise_concept: Vec<usize>,
}

impl Vocab {
    /// Sorted identifiers; an exercise keeps the first concept it appears with.
    pub fn from_records(records: &[InteractionRecord]) -> Self {
        let mut ex_concept: BTreeMap<&str, &str> = BTreeMap::new();
        let mut concepts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in records {
            ex_concept
                .entry(r.exercise_id.as_str())
                .or_insert(r.concept_id.as_str());
            concepts.insert(r.concept_id.as_str(), 0);
        }
        // Keep only concepts that some exercise actually maps to.
        let used: HashSet<&str> = ex_concept.values().copied().collect();
        concepts.retain(|c, _| used.contains(c));
        for (i, v) in concepts.values_mut().enumerate() {
            *v = i;
        }
        Self {
            exercises: ex_concept.keys().map(|s| s.to_string()).collect(),
            concepts: concepts.keys().map(|s| s.to_string()).collect(),
            exercise_concept: ex_concept.values().map(|c| concepts[c]).collect(),
        }
    }

    pub fn n_exercises(&self) -> usize {
        self.exercises.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn exercise_index(&self, id: &str) -> Option<usize> {
        self.exercises.binary_search_by(|e| e.as_str().cmp(id)).ok()
    }

    pub fn q_matrix(&self, gamma: f64) -> Result<QMatrix> {
        QMatrix::from_concepts(&self.exercise_concept, self.n_concepts(), gamma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub vocab: Vocab,
    pub discretizer: DiscretizerSpec,
    pub window_len: usize,
}

/// Windowed sequences plus the vocabulary needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    /// Ordered by student id, then window index.
    pub sequences: Vec<StudentSequence>,
}

impl Dataset {
    /// Builds windows from records sorted by `(student, timestamp)`.
    ///
    /// Difficulty buckets here come from all records; training recomputes
    /// them per fold with [`Dataset::apply_difficulty`].
    pub fn from_records(
        records: &[InteractionRecord],
        spec: &DiscretizerSpec,
        window_len: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let vocab = Vocab::from_records(records);
        let times = discretize(records, spec);
        let mut sequences = Vec::new();
        let mut offset = 0;
        for group in group_by_student(records) {
            let correct: Vec<bool> = group.iter().map(|r| r.correct).collect();
            let accuracy = compute_running_accuracy(&correct, spec.accuracy_buckets);
            let steps: Vec<Step> = group
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let exercise = vocab
                        .exercise_index(&r.exercise_id)
                        .expect("vocab built from the same records");
                    let tf = times[offset + i];
                    Step {
                        exercise,
                        concept: vocab.exercise_concept[exercise],
                        correct: r.correct,
                        answer_time_bucket: tf.answer_time_bucket,
                        interval_time_bucket: tf.interval_time_bucket,
                        answer_time_s: tf.answer_time_s,
                        interval_time_s: tf.interval_time_s,
                        difficulty_bucket: 0,
                        accuracy_bucket: accuracy[i],
                    }
                })
                .collect();
            offset += group.len();
            sequences.extend(make_windows(&group[0].student_id, &steps, window_len)?);
        }
        let mut ds = Self {
            meta: DatasetMeta {
                vocab,
                discretizer: spec.clone(),
                window_len,
            },
            sequences,
        };
        let table = ds.difficulty_from(&ds.sequences.iter().collect::<Vec<_>>());
        ds.apply_difficulty(&table);
        Ok(ds)
    }

    /// Sorted distinct student ids.
    pub fn students(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sequences.iter().map(|s| s.student_id.clone()).collect();
        ids.dedup();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Windows of the given students, in dataset order.
    pub fn select(&self, students: &[String]) -> Vec<&StudentSequence> {
        let set: HashSet<&str> = students.iter().map(String::as_str).collect();
        self.sequences
            .iter()
            .filter(|s| set.contains(s.student_id.as_str()))
            .collect()
    }

    pub fn difficulty_from(&self, sequences: &[&StudentSequence]) -> DifficultyTable {
        compute_exercise_difficulty(
            sequences
                .iter()
                .flat_map(|s| s.valid_steps().iter().map(|st| (st.exercise, st.correct))),
            self.meta.discretizer.difficulty_buckets,
        )
    }

    pub fn apply_difficulty(&mut self, table: &DifficultyTable) {
        for seq in &mut self.sequences {
            let n = seq.valid_len();
            for st in &mut seq.steps[..n] {
                st.difficulty_bucket = table.bucket(st.exercise);
            }
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        let meta_path = dir.join(META_FILE);
        fs::write(&meta_path, serde_json::to_string_pretty(&self.meta)?)
            .map_err(|e| CoreError::io(&meta_path, e))?;
        let seq_path = dir.join(SEQUENCES_FILE);
        let file = fs::File::create(&seq_path).map_err(|e| CoreError::io(&seq_path, e))?;
        let mut w = BufWriter::new(file);
        for s in &self.sequences {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| CoreError::io(&seq_path, e))?;
        }
        w.flush().map_err(|e| CoreError::io(&seq_path, e))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| CoreError::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let seq_path = dir.join(SEQUENCES_FILE);
        let file = fs::File::open(&seq_path).map_err(|e| CoreError::io(&seq_path, e))?;
        let mut sequences = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| CoreError::io(&seq_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let seq: StudentSequence = serde_json::from_str(&line)?;
            if seq.steps.len() != meta.window_len || seq.mask.len() != meta.window_len {
                return Err(CoreError::Data(format!(
                    "sequence for {} has length {}, expected {}",
                    seq.student_id,
                    seq.steps.len(),
                    meta.window_len
                )));
            }
            sequences.push(seq);
        }
        Ok(Self { meta, sequences })
    }
}

/// Per-student `(concept, correct)` streams with windows re-joined in order.
pub fn concept_streams(sequences: &[&StudentSequence]) -> Vec<Vec<(usize, bool)>> {
    let mut out: Vec<Vec<(usize, bool)>> = Vec::new();
    let mut last: Option<&str> = None;
    for s in sequences {
        if last != Some(s.student_id.as_str()) {
            out.push(Vec::new());
            last = Some(s.student_id.as_str());
        }
        let cur = out.last_mut().expect("pushed above");
        cur.extend(s.valid_steps().iter().map(|st| (st.concept, st.correct)));
    }
    out
}
