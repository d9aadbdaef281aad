use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// `⌊num · buckets / den⌋` clamped to the last bucket, in exact integer arithmetic.
fn ratio_bucket(num: usize, den: usize, buckets: usize) -> usize {
    debug_assert!(den > 0);
    (num * buckets / den).min(buckets - 1)
}

/// Exercise → difficulty bucket, fitted on one training fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTable {
    pub buckets: usize,
    pub by_exercise: HashMap<usize, usize>,
}

impl DifficultyTable {
    /// Unseen exercises fall into the middle bucket.
    pub fn bucket(&self, exercise: usize) -> usize {
        self.by_exercise
            .get(&exercise)
            .copied()
            .unwrap_or(self.buckets / 2)
    }
}

/// Difficulty `1 − correct/attempts` per exercise over `(exercise, correct)` attempts.
pub fn compute_exercise_difficulty<I>(attempts: I, buckets: usize) -> DifficultyTable
where
    I: IntoIterator<Item = (usize, bool)>,
{
    let mut counts: HashMap<usize, (usize, usize)> = HashMap::new();
    for (ex, correct) in attempts {
        let e = counts.entry(ex).or_default();
        e.0 += 1;
        if !correct {
            e.1 += 1;
        }
    }
    let by_exercise = counts
        .into_iter()
        .map(|(ex, (n, wrong))| (ex, ratio_bucket(wrong, n, buckets)))
        .collect();
    DifficultyTable {
        buckets,
        by_exercise,
    }
}

/// Bucket of the accuracy over all earlier steps; the first step uses 0.5.
pub fn compute_running_accuracy(correct: &[bool], buckets: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(correct.len());
    let mut right = 0;
    for (t, &c) in correct.iter().enumerate() {
        out.push(if t == 0 {
            ratio_bucket(1, 2, buckets)
        } else {
            ratio_bucket(right, t, buckets)
        });
        if c {
            right += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_of_four_correct_is_bucket_25() {
        let t = compute_exercise_difficulty([(7, true), (7, true), (7, false), (7, true)], 100);
        assert_eq!(t.bucket(7), 25);
    }

    #[test]
    fn always_correct_is_bucket_zero_and_unseen_is_middle() {
        let t = compute_exercise_difficulty([(1, true), (1, true)], 100);
        assert_eq!(t.bucket(1), 0);
        assert_eq!(t.bucket(99), 50);
    }

    #[test]
    fn never_correct_clamps_to_last_bucket() {
        let t = compute_exercise_difficulty([(1, false)], 100);
        assert_eq!(t.bucket(1), 99);
    }

    #[test]
    fn running_accuracy_examples() {
        let b = compute_running_accuracy(&[true, true, false, true], 100);
        assert_eq!(b[0], 50);
        assert_eq!(b[3], 66);
        let all = compute_running_accuracy(&[true; 5], 100);
        assert_eq!(all[4], 99);
    }
}
