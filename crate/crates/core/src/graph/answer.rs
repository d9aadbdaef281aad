use serde::{Deserialize, Serialize};

/// Row-normalized counts of "concept j answered correctly right after concept i
/// answered correctly". Diagonal is zero; rows sum to 1 or are all zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerMatrix {
    pub k: usize,
    /// Row-major `k × k`.
    pub values: Vec<f64>,
}

impl AnswerMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }
}

/// Raw correct→correct transition counts within each stream. Self
/// transitions are not counted.
pub fn count_transitions(k: usize, streams: &[Vec<(usize, bool)>]) -> Vec<u64> {
    let mut counts = vec![0u64; k * k];
    for stream in streams {
        for pair in stream.windows(2) {
            let ((ci, ok_i), (cj, ok_j)) = (pair[0], pair[1]);
            if ok_i && ok_j && ci != cj {
                counts[ci * k + cj] += 1;
            }
        }
    }
    counts
}

/// Builds the answer matrix from per-student `(concept, correct)` streams in
/// time order. Transitions never cross student boundaries.
pub fn build_answer_matrix(k: usize, streams: &[Vec<(usize, bool)>]) -> AnswerMatrix {
    let counts = count_transitions(k, streams);
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        let row = &counts[i * k..(i + 1) * k];
        let total: u64 = row.iter().sum();
        if total > 0 {
            for (v, &n) in values[i * k..(i + 1) * k].iter_mut().zip(row) {
                *v = n as f64 / total as f64;
            }
        }
    }
    AnswerMatrix { k, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_sequence() {
        // concepts 1,2,1,3,1,2 (0-based 0,1,0,2,0,1), all correct
        let s = vec![(0, true), (1, true), (0, true), (2, true), (0, true), (1, true)];
        let a = build_answer_matrix(3, &[s]);
        assert!((a.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((a.get(0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(2, 0), 1.0);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn incorrect_answer_breaks_the_pair() {
        let s = vec![(0, true), (1, false), (2, true)];
        let a = build_answer_matrix(3, &[s]);
        assert!(a.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeats_leave_diagonal_zero() {
        let s = vec![(0, true), (0, true), (1, true), (1, true)];
        let a = build_answer_matrix(2, &[s]);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.get(0, 1), 1.0);
    }

    #[test]
    fn transitions_do_not_cross_students() {
        let a = build_answer_matrix(2, &[vec![(0, true)], vec![(1, true)]]);
        assert!(a.values.iter().all(|&v| v == 0.0));
    }
}
