use cpf_autodiff::{ParamId, ParamStore, Tape, Var};
use rand_chacha::ChaCha8Rng;

use super::cell::{glorot, ids, mean, zero_bias};
use super::{CellContext, Dropout, KnowledgeCell, ModelConfig, Prediction, SequenceOutput, StepTrace};
use crate::data::Step;
use crate::{CoreError, Result};

const NAMES: [&str; 14] = [
    "exercise_emb",
    "answer_emb",
    "answer_time_emb",
    "interval_time_emb",
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

/// Learning-process cell without ability, prerequisite or review inputs.
pub struct LpktCell;

/// Weights of the recurrent part of the cell.
#[derive(Clone, Copy, Debug)]
pub struct LpktWeights {
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
    pub w4: Var,
    pub b4: Var,
}

pub struct LpktStep {
    pub h: Var,
    pub pooled: Var,
    pub gain: Var,
    pub gate_l: Var,
    pub gate_f: Var,
}

/// One state update from the previous and current learning embeddings.
pub fn lpkt_step(
    tape: &mut Tape<'_>,
    w: &LpktWeights,
    q_row: &[f64],
    h_prev: Var,
    l_prev: Var,
    l_t: Var,
    interval: Var,
) -> Result<LpktStep> {
    let pooled = tape.pool(q_row, h_prev)?;
    let x = tape.concat(&[l_prev, interval, l_t, pooled])?;
    let pre = tape.linear(x, w.w2, Some(w.b2))?;
    let lg = tape.tanh(pre);
    let pre = tape.linear(x, w.w3, Some(w.b3))?;
    let gate_l = tape.sigmoid(pre);
    let shifted = tape.affine(lg, 0.5, 0.5);
    let gain = tape.mul(gate_l, shifted)?;
    let v = tape.concat(&[gain, interval])?;
    let gate_in = tape.concat_broadcast(h_prev, v)?;
    let pre = tape.linear(gate_in, w.w4, Some(w.b4))?;
    let gate_f = tape.sigmoid(pre);
    let spread = tape.outer(q_row, gain)?;
    let kept = tape.mul(gate_f, h_prev)?;
    let h = tape.add(spread, kept)?;
    Ok(LpktStep {
        h,
        pooled,
        gain,
        gate_l,
        gate_f,
    })
}

impl KnowledgeCell for LpktCell {
    fn name(&self) -> &'static str {
        "lpkt"
    }

    fn init_params(&self, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParamStore {
        let d = cfg.d;
        let mut s = ParamStore::new();
        glorot(&mut s, "exercise_emb", cfg.n_exercises, d, rng);
        glorot(&mut s, "answer_emb", 2, cfg.d_a, rng);
        glorot(&mut s, "answer_time_emb", cfg.answer_time_vocab, d, rng);
        glorot(&mut s, "interval_time_emb", cfg.interval_time_vocab, d, rng);
        glorot(&mut s, "w1", 2 * d + cfg.d_a, d, rng);
        zero_bias(&mut s, "b1", d);
        glorot(&mut s, "w2", 4 * d, d, rng);
        zero_bias(&mut s, "b2", d);
        glorot(&mut s, "w3", 4 * d, d, rng);
        zero_bias(&mut s, "b3", d);
        glorot(&mut s, "w4", 3 * d, d, rng);
        zero_bias(&mut s, "b4", d);
        glorot(&mut s, "w5", 2 * d, 1, rng);
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
        let (d, k) = (ctx.config.d, ctx.config.n_concepts);
        let [exercise, answer, answer_time, interval_time, w1, b1, w2, b2, w3, b3, w4, b4, w5, b5]: [ParamId; 14] =
            ids(tape.store(), NAMES)?;
        let (w1, b1, w5, b5) = (tape.param(w1), tape.param(b1), tape.param(w5), tape.param(b5));
        let weights = LpktWeights {
            w2: tape.param(w2),
            b2: tape.param(b2),
            w3: tape.param(w3),
            b3: tape.param(b3),
            w4: tape.param(w4),
            b4: tape.param(b4),
        };

        let mut h = tape.zeros(k, d);
        let mut l_prev = tape.zeros(1, d);
        let mut out = SequenceOutput::default();
        let mut pending = None;
        for (t, st) in steps.iter().enumerate() {
            let q_row = ctx.q.row(st.exercise);
            let e = tape.gather(exercise, st.exercise)?;
            let a = tape.gather(answer, usize::from(st.correct))?;
            let at = tape.gather(answer_time, st.answer_time_bucket)?;
            let joined = tape.concat(&[e, a, at])?;
            let l_t = tape.linear(joined, w1, Some(b1))?;
            let l_t = dropout.apply(tape, l_t)?;
            let interval = tape.gather(interval_time, st.interval_time_bucket)?;
            let step = lpkt_step(tape, &weights, q_row, h, l_prev, l_t, interval)?;
            if tape.value(step.h).iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFiniteState { step: t });
            }
            h = step.h;
            l_prev = l_t;

            if ctx.collect_traces {
                out.traces.push(StepTrace {
                    step: t,
                    exercise: st.exercise,
                    concept: st.concept,
                    correct: st.correct,
                    pooled: tape.value(step.pooled).to_vec(),
                    gain: tape.value(step.gain).to_vec(),
                    forgetting_weight: 1.0,
                    learning_gate_mean: mean(tape.value(step.gate_l)),
                    forgetting_gate_mean: mean(tape.value(step.gate_f)),
                    prediction: pending,
                });
            }

            if let Some(next) = steps.get(t + 1) {
                let e_next = tape.gather(exercise, next.exercise)?;
                let pooled_next = tape.pool(ctx.q.row(next.exercise), h)?;
                let joined = tape.concat(&[e_next, pooled_next])?;
                let logit = tape.linear(joined, w5, Some(b5))?;
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
