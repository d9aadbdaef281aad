use cpf_autodiff::{Tape, Var};

use super::Registry;
use crate::Result;

/// Builds the review vector from the pooled states seen so far. The last
/// history entry is the pooled state of the current step.
pub trait ReviewStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn review(&self, tape: &mut Tape<'_>, history: &[Var], window: usize, d: usize) -> Result<Var>;
}

/// Attention weights over the last `window` entries: softmax of each entry's
/// cosine similarity to the latest one. `None` when review is disabled.
pub fn attention_weights(tape: &mut Tape<'_>, history: &[Var], window: usize) -> Result<Option<(Var, Vec<Var>)>> {
    let take = window.min(history.len());
    if take == 0 {
        return Ok(None);
    }
    let recent = history[history.len() - take..].to_vec();
    let query = *history.last().expect("non-empty");
    let sims = recent
        .iter()
        .map(|&h| tape.cosine(h, query))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let stacked = tape.stack(&sims)?;
    let weights = tape.softmax(stacked)?;
    Ok(Some((weights, recent)))
}

/// Softmax-weighted sum of recent pooled states.
pub struct AttentionOverPast;

impl ReviewStrategy for AttentionOverPast {
    fn name(&self) -> &'static str {
        "attention_over_past"
    }

    fn review(&self, tape: &mut Tape<'_>, history: &[Var], window: usize, d: usize) -> Result<Var> {
        match attention_weights(tape, history, window)? {
            None => Ok(tape.zeros(1, d)),
            Some((w, recent)) => Ok(tape.weighted_sum(w, &recent)?),
        }
    }
}

/// The softmax weights multiply the latest pooled state and sum to one, so the
/// result is that state itself.
pub struct Literal;

impl ReviewStrategy for Literal {
    fn name(&self) -> &'static str {
        "literal"
    }

    fn review(&self, tape: &mut Tape<'_>, history: &[Var], window: usize, d: usize) -> Result<Var> {
        match history.last() {
            Some(&latest) if window > 0 => Ok(latest),
            _ => Ok(tape.zeros(1, d)),
        }
    }
}

pub fn review_registry() -> Registry<dyn ReviewStrategy> {
    let mut r: Registry<dyn ReviewStrategy> = Registry::new("review mode");
    r.register("attention_over_past", || Box::new(AttentionOverPast));
    r.register("literal", || Box::new(Literal));
    r
}

#[cfg(test)]
mod tests {
    use cpf_autodiff::ParamStore;

    use super::*;

    fn history(tape: &mut Tape<'_>, rows: &[[f64; 3]]) -> Vec<Var> {
        rows.iter().map(|r| tape.vector(r.to_vec())).collect()
    }

    #[test]
    fn zero_window_gives_zero_vector() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let h = history(&mut tape, &[[1.0, 2.0, 3.0], [0.5, 0.1, 0.0]]);
        for strat in [&AttentionOverPast as &dyn ReviewStrategy, &Literal] {
            let v = strat.review(&mut tape, &h, 0, 3).unwrap();
            assert_eq!(tape.value(v), &[0.0; 3]);
            let e = strat.review(&mut tape, &[], 10, 3).unwrap();
            assert_eq!(tape.value(e), &[0.0; 3]);
        }
    }

    #[test]
    fn literal_returns_latest_state_exactly() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let h = history(&mut tape, &[[1.0, 2.0, 3.0], [0.3, -0.7, 0.11]]);
        let v = Literal.review(&mut tape, &h, 5, 3).unwrap();
        assert_eq!(tape.value(v), &[0.3, -0.7, 0.11]);
    }

    #[test]
    fn identical_history_returns_that_vector() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let h = history(&mut tape, &[[0.25, -0.5, 2.0]; 4]);
        let v = AttentionOverPast.review(&mut tape, &h, 3, 3).unwrap();
        for (x, y) in tape.value(v).iter().zip([0.25, -0.5, 2.0]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_one_and_respect_window() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let h = history(&mut tape, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.2, 0.0, 1.0]]);
        let (w, recent) = attention_weights(&mut tape, &h, 3).unwrap().unwrap();
        assert_eq!(recent.len(), 3);
        let total: f64 = tape.value(w).iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn registry_knows_both_modes() {
        let r = review_registry();
        assert_eq!(r.names(), vec!["attention_over_past", "literal"]);
        assert_eq!(r.create("literal").unwrap().name(), "literal");
    }
}
