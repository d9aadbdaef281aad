use serde::{Deserialize, Serialize};

use crate::data::InteractionRecord;
use crate::{CoreError, Result};

/// Units, caps and bucket counts for the time and ratio features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizerSpec {
    /// Answer time is bucketed in whole seconds up to this cap.
    pub answer_time_cap: usize,
    /// Interval time is bucketed in whole minutes up to this cap.
    pub interval_time_cap: usize,
    pub difficulty_buckets: usize,
    pub accuracy_buckets: usize,
}

impl Default for DiscretizerSpec {
    fn default() -> Self {
        Self {
            answer_time_cap: 3600,
            interval_time_cap: 43_200,
            difficulty_buckets: 100,
            accuracy_buckets: 100,
        }
    }
}

impl DiscretizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.answer_time_cap == 0 || self.interval_time_cap == 0 {
            return Err(CoreError::Config("time caps must be positive".into()));
        }
        if self.difficulty_buckets < 2 || self.accuracy_buckets < 2 {
            return Err(CoreError::Config("bucket counts must be at least 2".into()));
        }
        Ok(())
    }

    /// Rows needed in the answer-time embedding table.
    pub fn answer_time_vocab(&self) -> usize {
        self.answer_time_cap + 1
    }

    pub fn interval_time_vocab(&self) -> usize {
        self.interval_time_cap + 1
    }

    pub fn answer_time_bucket(&self, seconds: f64) -> usize {
        (seconds.max(0.0).floor() as usize).min(self.answer_time_cap)
    }

    pub fn interval_time_bucket(&self, seconds: f64) -> usize {
        ((seconds.max(0.0) / 60.0).floor() as usize).min(self.interval_time_cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeFeatures {
    pub answer_time_bucket: usize,
    pub interval_time_bucket: usize,
    pub answer_time_s: f64,
    pub interval_time_s: f64,
}

/// Buckets answer and interval times for records sorted by student and time.
/// The interval of each student's first record is 0.
pub fn discretize(records: &[InteractionRecord], spec: &DiscretizerSpec) -> Vec<TimeFeatures> {
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let interval = match i.checked_sub(1).map(|p| &records[p]) {
            Some(prev) if prev.student_id == r.student_id => (r.timestamp - prev.timestamp).max(0.0),
            _ => 0.0,
        };
        out.push(TimeFeatures {
            answer_time_bucket: spec.answer_time_bucket(r.answer_time),
            interval_time_bucket: spec.interval_time_bucket(interval),
            answer_time_s: r.answer_time,
            interval_time_s: interval,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(student: &str, ts: f64, at: f64) -> InteractionRecord {
        InteractionRecord {
            student_id: student.into(),
            exercise_id: "e".into(),
            concept_id: "c".into(),
            correct: true,
            answer_time: at,
            timestamp: ts,
        }
    }

    #[test]
    fn ninety_seconds_is_one_minute_bucket() {
        let recs = [rec("a", 0.0, 10.0), rec("a", 90.0, 10.0)];
        let f = discretize(&recs, &DiscretizerSpec::default());
        assert_eq!(f[1].interval_time_bucket, 1);
        assert_eq!(f[1].interval_time_s, 90.0);
    }

    #[test]
    fn long_gap_is_clamped_to_cap() {
        let ninety_days = 90.0 * 86_400.0;
        let recs = [rec("a", 0.0, 10.0), rec("a", ninety_days, 7200.0)];
        let f = discretize(&recs, &DiscretizerSpec::default());
        assert_eq!(f[1].interval_time_bucket, 43_200);
        assert_eq!(f[1].answer_time_bucket, 3600);
    }

    #[test]
    fn first_step_of_every_student_has_zero_interval() {
        let recs = [rec("a", 5.0, 1.0), rec("a", 500.0, 1.0), rec("b", 9000.0, 1.0)];
        let f = discretize(&recs, &DiscretizerSpec::default());
        assert_eq!(f[0].interval_time_bucket, 0);
        assert_eq!(f[2].interval_time_bucket, 0);
        assert_eq!(f[2].interval_time_s, 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(DiscretizerSpec::default().validate().is_ok());
        let bad = DiscretizerSpec {
            difficulty_buckets: 1,
            ..DiscretizerSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
