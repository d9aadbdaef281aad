use cpf_autodiff::{ParamId, ParamStore, Tape, Var};
use rand_chacha::ChaCha8Rng;

use super::cell::{glorot, ids, mean, zero_bias};
use super::{Ablation, CellContext, Dropout, KnowledgeCell, Prediction, SequenceOutput, StepTrace};
use crate::data::Step;
use crate::graph::{forgetting_weight, nearest_prerequisite_step, PMatrix};
use crate::{CoreError, Result};

const NAMES: [&str; 17] = [
    "exercise_emb",
    "concept_emb",
    "answer_emb",
    "answer_time_emb",
    "interval_time_emb",
    "difficulty_emb",
    "accuracy_emb",
    "w1",
    "b1",
    "w2",
    "b2",
    "w3",
    "b3",
    "w4",
    "b4",
    "w5",
    "b5",
];

/// Knowledge cell with ability-aware learning gains, prerequisite-weighted
/// forgetting and attention over recent pooled states.
pub struct CpfCell;

struct Weights {
    exercise: ParamId,
    concept: ParamId,
    answer: ParamId,
    answer_time: ParamId,
    interval_time: ParamId,
    difficulty: ParamId,
    accuracy: ParamId,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    w3: Var,
    b3: Var,
    w4: Var,
    b4: Var,
    w5: Var,
    b5: Var,
}

impl Weights {
    fn load(tape: &mut Tape<'_>) -> Result<Self> {
        let [exercise, concept, answer, answer_time, interval_time, difficulty, accuracy, w1, b1, w2, b2, w3, b3, w4, b4, w5, b5] =
            ids(tape.store(), NAMES)?;
        Ok(Self {
            exercise,
            concept,
            answer,
            answer_time,
            interval_time,
            difficulty,
            accuracy,
            w1: tape.param(w1),
            b1: tape.param(b1),
            w2: tape.param(w2),
            b2: tape.param(b2),
            w3: tape.param(w3),
            b3: tape.param(b3),
            w4: tape.param(w4),
            b4: tape.param(b4),
            w5: tape.param(w5),
            b5: tape.param(b5),
        })
    }

    /// `ẽ = e ⊕ c` for an exercise and its concept.
    fn exercise_concept(&self, tape: &mut Tape<'_>, step: &Step) -> Result<Var> {
        let e = tape.gather(self.exercise, step.exercise)?;
        let c = tape.gather(self.concept, step.concept)?;
        Ok(tape.concat(&[e, c])?)
    }
}

/// Mean concept embedding of the prerequisites of `concept`; non-edges count
/// with weight `rho`.
fn prerequisite_vector(tape: &mut Tape<'_>, table: ParamId, p: &PMatrix, concept: usize, rho: f64, d: usize) -> Result<Var> {
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for j in 0..p.k {
        if j == concept {
            continue;
        }
        let w = if p.has(j, concept) { 1.0 } else { rho };
        if w > 0.0 {
            rows.push(j);
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Ok(tape.zeros(1, d));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(tape.gather_weighted(table, &rows, &weights)?)
}

impl KnowledgeCell for CpfCell {
    fn name(&self) -> &'static str {
        "cpf"
    }

    fn init_params(&self, cfg: &super::ModelConfig, rng: &mut ChaCha8Rng) -> ParamStore {
        let d = cfg.d;
        let mut s = ParamStore::new();
        glorot(&mut s, "exercise_emb", cfg.n_exercises, d, rng);
        glorot(&mut s, "concept_emb", cfg.n_concepts, d, rng);
        glorot(&mut s, "answer_emb", 2, cfg.d_a, rng);
        glorot(&mut s, "answer_time_emb", cfg.answer_time_vocab, d, rng);
        glorot(&mut s, "interval_time_emb", cfg.interval_time_vocab, d, rng);
        glorot(&mut s, "difficulty_emb", cfg.difficulty_buckets, d, rng);
        glorot(&mut s, "accuracy_emb", cfg.accuracy_buckets, d, rng);
        glorot(&mut s, "w1", 3 * d + cfg.d_a, d, rng);
        zero_bias(&mut s, "b1", d);
        glorot(&mut s, "w2", 2 * d, d, rng);
        zero_bias(&mut s, "b2", d);
        glorot(&mut s, "w3", 2 * d, d, rng);
        zero_bias(&mut s, "b3", d);
        glorot(&mut s, "w4", 5 * d, d, rng);
        zero_bias(&mut s, "b4", d);
        glorot(&mut s, "w5", 3 * d, 1, rng);
        zero_bias(&mut s, "b5", 1);
        s
    }

    fn forward(
        &self,
        tape: &mut Tape<'_>,
        ctx: &CellContext<'_>,
        steps: &[Step],
        dropout: &mut Dropout,
    ) -> Result<SequenceOutput> {
        let cfg = ctx.config;
        let (d, k) = (cfg.d, cfg.n_concepts);
        let ablation = cfg.ablation;
        let no_ability = ablation == Ablation::NoPersonalization;
        let no_learning = ablation == Ablation::NoLearningModule;
        let no_forgetting = ablation == Ablation::NoForgetting;
        let no_p = ablation == Ablation::NoPMatrix;
        let w = Weights::load(tape)?;
        let concepts: Vec<usize> = steps.iter().map(|s| s.concept).collect();

        let mut h = tape.zeros(k, d);
        let mut history: Vec<Var> = Vec::with_capacity(steps.len());
        let mut out = SequenceOutput::default();
        let mut pending: Option<f64> = None;

        for (t, st) in steps.iter().enumerate() {
            let q_row = ctx.q.row(st.exercise);

            let ability = if no_ability {
                tape.zeros(1, d)
            } else {
                let df = tape.gather(w.difficulty, st.difficulty_bucket)?;
                let ac = tape.gather(w.accuracy, st.accuracy_bucket)?;
                let at = tape.gather(w.answer_time, st.answer_time_bucket)?;
                let df = tape.scale(df, cfg.alpha);
                let ac = tape.scale(ac, cfg.beta);
                let at = tape.scale(at, cfg.mu);
                let sum = tape.add(df, ac)?;
                tape.add(sum, at)?
            };

            // Learning module.
            let e_tilde = w.exercise_concept(tape, st)?;
            let answer = tape.gather(w.answer, usize::from(st.correct))?;
            let ability_in = if no_learning { tape.zeros(1, d) } else { ability };
            let joined = tape.concat(&[e_tilde, answer, ability_in])?;
            let learn = tape.linear(joined, w.w1, Some(w.b1))?;
            let learn = dropout.apply(tape, learn)?;
            let pooled = tape.pool(q_row, h)?;
            let x = tape.concat(&[learn, pooled])?;
            let pre = tape.linear(x, w.w2, Some(w.b2))?;
            let lg = tape.tanh(pre);
            let pre = tape.linear(x, w.w3, Some(w.b3))?;
            let gate_l = tape.sigmoid(pre);
            let shifted = tape.affine(lg, 0.5, 0.5);
            let mut gain = tape.mul(gate_l, shifted)?;
            if !no_learning {
                let pv = if no_p {
                    tape.zeros(1, d)
                } else {
                    prerequisite_vector(tape, w.concept, ctx.p, st.concept, cfg.rho, d)?
                };
                let joined = tape.concat(&[pv, pooled])?;
                let act = tape.sigmoid(joined);
                let norm = tape.norm(act);
                let bonus = tape.scale(norm, 1.0 / ((2 * d) as f64).sqrt());
                gain = tape.add_scalar(gain, bonus)?;
            }
            let spread = tape.outer(q_row, gain)?;

            // Forgetting module.
            let wf = if no_p || no_forgetting {
                1.0
            } else {
                let m = nearest_prerequisite_step(&concepts, t, ctx.p);
                forgetting_weight(steps, t, m, &cfg.forgetting)
            };
            history.push(pooled);
            let (h_next, gate_f_mean) = if no_forgetting {
                (tape.add(spread, h)?, 1.0)
            } else {
                let causal = tape.scale(gain, wf);
                let interval = tape.gather(w.interval_time, st.interval_time_bucket)?;
                let review = ctx.review.review(tape, &history, cfg.review_window, d)?;
                let v = tape.concat(&[causal, interval, ability, review])?;
                let v = dropout.apply(tape, v)?;
                let gate_in = tape.concat_broadcast(h, v)?;
                let pre = tape.linear(gate_in, w.w4, Some(w.b4))?;
                let gate_f = tape.sigmoid(pre);
                let kept = tape.mul(gate_f, h)?;
                let gf_mean = mean(tape.value(gate_f));
                (tape.add(spread, kept)?, gf_mean)
            };
            if tape.value(h_next).iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFiniteState { step: t });
            }
            h = h_next;

            if ctx.collect_traces {
                out.traces.push(StepTrace {
                    step: t,
                    exercise: st.exercise,
                    concept: st.concept,
                    correct: st.correct,
                    pooled: tape.value(pooled).to_vec(),
                    gain: tape.value(gain).to_vec(),
                    forgetting_weight: wf,
                    learning_gate_mean: mean(tape.value(gate_l)),
                    forgetting_gate_mean: gate_f_mean,
                    prediction: pending,
                });
            }

            if let Some(next) = steps.get(t + 1) {
                let e_next = w.exercise_concept(tape, next)?;
                let pooled_next = tape.pool(ctx.q.row(next.exercise), h)?;
                let joined = tape.concat(&[e_next, pooled_next])?;
                let logit = tape.linear(joined, w.w5, Some(w.b5))?;
                let y = tape.sigmoid(logit);
                pending = Some(tape.scalar_value(y));
                out.predictions.push(Prediction {
                    step: t + 1,
                    y,
                    label: next.correct,
                });
            }
        }
        out.final_state = Some(h);
        Ok(out)
    }
}
