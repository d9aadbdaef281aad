use serde::{Deserialize, Serialize};

use crate::data::Step;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Amplitude and offset of the prerequisite forgetting weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgettingParams {
    pub delta: f64,
    pub lambda: f64,
}

impl Default for ForgettingParams {
    fn default() -> Self {
        Self {
            delta: 2.0,
            lambda: 0.0,
        }
    }
}

impl ForgettingParams {
    /// `δ / (1 + exp(Δt + λ))` for a lag in days.
    pub fn weight(&self, lag_days: f64) -> f64 {
        self.delta / (1.0 + (lag_days + self.lambda).exp())
    }

    /// Largest attainable weight, reached at zero lag.
    pub fn max_weight(&self) -> f64 {
        self.weight(0.0)
    }
}

/// `|(at_t + it_t) − (at_m + it_m)|` on raw seconds, in days.
pub fn lag_days(current: &Step, prerequisite: &Step) -> f64 {
    let a = current.answer_time_s + current.interval_time_s;
    let b = prerequisite.answer_time_s + prerequisite.interval_time_s;
    (a - b).abs() / SECONDS_PER_DAY
}

/// Weight for step `t` given its nearest prerequisite step `m`; 1 without one.
pub fn forgetting_weight(steps: &[Step], t: usize, m: Option<usize>, params: &ForgettingParams) -> f64 {
    match m {
        None => 1.0,
        Some(m) => params.weight(lag_days(&steps[t], &steps[m])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_prerequisite_means_unit_weight() {
        let steps = [Step::default(); 2];
        assert_eq!(forgetting_weight(&steps, 1, None, &ForgettingParams::default()), 1.0);
    }

    #[test]
    fn zero_lag_gives_one_at_defaults() {
        assert_eq!(ForgettingParams::default().weight(0.0), 1.0);
    }

    #[test]
    fn one_day_lag() {
        let w = ForgettingParams::default().weight(1.0);
        assert!((w - 2.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert!((w - 0.537_88).abs() < 1e-5);
    }

    #[test]
    fn lag_uses_raw_answer_plus_interval_seconds() {
        let cur = Step {
            answer_time_s: 30.0,
            interval_time_s: SECONDS_PER_DAY,
            ..Step::default()
        };
        let pre = Step {
            answer_time_s: 30.0,
            ..Step::default()
        };
        assert_eq!(lag_days(&cur, &pre), 1.0);
        assert_eq!(lag_days(&pre, &cur), 1.0);
    }
}
