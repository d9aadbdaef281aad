use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// One model input step. Padded steps are all-zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub exercise: usize,
    pub concept: usize,
    pub correct: bool,
    pub answer_time_bucket: usize,
    pub interval_time_bucket: usize,
    pub answer_time_s: f64,
    pub interval_time_s: f64,
    pub difficulty_bucket: usize,
    pub accuracy_bucket: usize,
}

/// A fixed-length window of one student's history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentSequence {
    pub student_id: String,
    /// Position of this window among the student's windows.
    pub window_index: usize,
    pub steps: Vec<Step>,
    pub mask: Vec<bool>,
}

impl StudentSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Valid steps form a prefix; this is its length.
    pub fn valid_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn valid_steps(&self) -> &[Step] {
        &self.steps[..self.valid_len()]
    }

    /// Number of next-step predictions (and loss terms) this window yields.
    pub fn num_predictions(&self) -> usize {
        self.valid_len().saturating_sub(1)
    }
}

/// Cuts a student's steps into consecutive windows of length `len`; the last
/// window is zero-padded. Each window restarts its interval clock at 0.
pub fn make_windows(student_id: &str, steps: &[Step], len: usize) -> Result<Vec<StudentSequence>> {
    if len <= 1 {
        return Err(CoreError::Argument(format!("window length must exceed 1, got {len}")));
    }
    Ok(steps
        .chunks(len)
        .enumerate()
        .map(|(window_index, chunk)| {
            let mut window = chunk.to_vec();
            window[0].interval_time_bucket = 0;
            window[0].interval_time_s = 0.0;
            let mut mask = vec![true; chunk.len()];
            window.resize(len, Step::default());
            mask.resize(len, false);
            StudentSequence {
                student_id: student_id.to_string(),
                window_index,
                steps: window,
                mask,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(n: usize) -> Vec<Step> {
        (0..n)
            .map(|i| Step {
                exercise: i % 3,
                correct: i % 2 == 0,
                interval_time_s: 60.0,
                interval_time_bucket: 1,
                ..Step::default()
            })
            .collect()
    }

    #[test]
    fn two_hundred_fifty_steps_make_three_windows() {
        let w = make_windows("s", &steps(250), 100).unwrap();
        let valid: Vec<usize> = w.iter().map(StudentSequence::valid_len).collect();
        assert_eq!(valid, vec![100, 100, 50]);
        assert!(w.iter().all(|s| s.len() == 100));
        assert_eq!(w[2].steps[75], Step::default());
    }

    #[test]
    fn exact_length_is_one_full_window() {
        let w = make_windows("s", &steps(100), 100).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].mask.iter().all(|&m| m));
    }

    #[test]
    fn window_starts_have_zero_interval() {
        let w = make_windows("s", &steps(7), 3).unwrap();
        for s in &w {
            assert_eq!(s.steps[0].interval_time_s, 0.0);
            assert_eq!(s.steps[0].interval_time_bucket, 0);
        }
        assert_eq!(w[0].steps[1].interval_time_s, 60.0);
    }

    #[test]
    fn window_length_one_is_rejected() {
        assert!(make_windows("s", &steps(3), 1).is_err());
    }
}
