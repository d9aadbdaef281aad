use cpf_autodiff::{finite_diff_check, sigmoid, AutodiffError, ParamStore, Tape, Var};
use cpf_core::data::{QMatrix, Step, StudentSequence};
use cpf_core::graph::{PMatrix, SECONDS_PER_DAY};
use cpf_core::model::{Ablation, Checkpoint, Dropout, Model, ModelConfig};
use cpf_core::CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 6;
const K: usize = 4;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        d_a: 4,
        review_window: 3,
        dropout: 0.0,
        n_exercises: N,
        n_concepts: K,
        answer_time_vocab: 10,
        interval_time_vocab: 10,
        difficulty_buckets: 5,
        accuracy_buckets: 5,
        ..ModelConfig::default()
    }
}

fn exercise_concepts() -> Vec<usize> {
    (0..N).map(|e| e % K).collect()
}

fn q() -> QMatrix {
    QMatrix::from_concepts(&exercise_concepts(), K, 0.03).unwrap()
}

fn random_steps(n: usize, seed: u64) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ec = exercise_concepts();
    (0..n)
        .map(|t| {
            let exercise = rng.random_range(0..N);
            Step {
                exercise,
                concept: ec[exercise],
                correct: rng.random_bool(0.6),
                answer_time_bucket: rng.random_range(0..10),
                interval_time_bucket: if t == 0 { 0 } else { rng.random_range(0..10) },
                answer_time_s: rng.random_range(1.0..60.0),
                interval_time_s: if t == 0 { 0.0 } else { rng.random_range(0.0..3.0) * SECONDS_PER_DAY },
                difficulty_bucket: rng.random_range(0..5),
                accuracy_bucket: rng.random_range(0..5),
            }
        })
        .collect()
}

fn sequence(steps: Vec<Step>) -> StudentSequence {
    let mask = vec![true; steps.len()];
    StudentSequence {
        student_id: "s".into(),
        window_index: 0,
        steps,
        mask,
    }
}

fn chain_p() -> PMatrix {
    PMatrix::from_edges(K, &[(0, 1), (1, 2), (2, 3)])
}

fn to_ad(e: CoreError) -> AutodiffError {
    match e {
        CoreError::Autodiff(a) => a,
        other => panic!("unexpected error: {other}"),
    }
}

/// Mean BCE over the sequence's predictions plus an L2 term.
fn loss_on(model: &Model, tape: &mut Tape<'_>, steps: &[Step], l2: f64) -> cpf_autodiff::Result<Var> {
    let out = model.forward(tape, steps, &mut Dropout::off(), false).map_err(to_ad)?;
    let mut terms = Vec::new();
    for p in &out.predictions {
        terms.push(tape.bce(p.y, if p.label { 1.0 } else { 0.0 })?);
    }
    let total = tape.add_all(&terms)?;
    let mut loss = tape.scale(total, 1.0 / terms.len() as f64);
    if l2 > 0.0 {
        let ids: Vec<_> = tape.store().ids().collect();
        for id in ids {
            let p = tape.param(id);
            let sq = tape.sum_squares(p);
            let sq = tape.scale(sq, l2);
            loss = tape.add(loss, sq)?;
        }
    }
    Ok(loss)
}

fn gradcheck(mut model: Model, steps: &[Step], l2: f64) {
    let mut store = std::mem::replace(&mut model.params, ParamStore::new());
    let report = finite_diff_check(&mut store, 1e-5, 1e-4, |tape| loss_on(&model, tape, steps, l2)).unwrap();
    for b in &report.blocks {
        assert!(b.passed, "{} rel err {:.3e}", b.name, b.max_rel_error);
    }
}

#[test]
fn cpf_gradients_match_finite_differences_for_every_ablation() {
    let steps = random_steps(5, 1);
    for ablation in Ablation::ALL {
        let cfg = ModelConfig { ablation, ..tiny_config() };
        let model = Model::new(cfg, q(), chain_p(), 7).unwrap();
        gradcheck(model, &steps, 1e-3);
    }
}

#[test]
fn lpkt_and_literal_review_gradients_match_finite_differences() {
    let steps = random_steps(5, 2);
    let lpkt = ModelConfig { mode: "lpkt".into(), ..tiny_config() };
    gradcheck(Model::new(lpkt, q(), chain_p(), 3).unwrap(), &steps, 0.0);
    let literal = ModelConfig { review_mode: "literal".into(), ..tiny_config() };
    gradcheck(Model::new(literal, q(), chain_p(), 3).unwrap(), &steps, 0.0);
}

#[test]
fn predictions_cover_steps_two_onward_and_lie_in_unit_interval() {
    let model = Model::new(tiny_config(), q(), chain_p(), 11).unwrap();
    let seq = sequence(random_steps(9, 4));
    let preds = model.predict(&seq).unwrap();
    assert_eq!(preds.iter().map(|p| p.0).collect::<Vec<_>>(), (1..9).collect::<Vec<_>>());
    assert!(preds.iter().all(|p| p.1 > 0.0 && p.1 < 1.0));
    for (p, s) in preds.iter().zip(&seq.steps[1..]) {
        assert_eq!(p.2, s.correct);
    }
}

#[test]
fn single_valid_step_gives_no_predictions() {
    let model = Model::new(tiny_config(), q(), chain_p(), 11).unwrap();
    let mut seq = sequence(random_steps(4, 4));
    seq.mask = vec![true, false, false, false];
    for s in &mut seq.steps[1..] {
        *s = Step::default();
    }
    assert!(model.predict(&seq).unwrap().is_empty());
}

#[test]
fn padded_steps_do_not_change_predictions() {
    let model = Model::new(tiny_config(), q(), chain_p(), 5).unwrap();
    let steps = random_steps(6, 8);
    let short = sequence(steps[..4].to_vec());
    let mut padded = sequence(steps[..4].to_vec());
    padded.steps.extend([Step::default(); 3]);
    padded.mask.extend([false; 3]);
    assert_eq!(model.predict(&short).unwrap(), model.predict(&padded).unwrap());
}

#[test]
fn empty_p_matrix_makes_full_and_no_p_identical() {
    let seq = sequence(random_steps(12, 9));
    let full = Model::new(tiny_config(), q(), PMatrix::empty(K), 21).unwrap();
    let cfg = ModelConfig { ablation: Ablation::NoPMatrix, ..tiny_config() };
    let no_p = Model::new(cfg, q(), PMatrix::empty(K), 21).unwrap();
    assert_eq!(full.params, no_p.params);
    assert_eq!(full.predict(&seq).unwrap(), no_p.predict(&seq).unwrap());
}

#[test]
fn zero_ability_mix_makes_full_and_no_personalization_identical() {
    let seq = sequence(random_steps(12, 10));
    let base = ModelConfig { alpha: 0.0, beta: 0.0, mu: 0.0, ..tiny_config() };
    let full = Model::new(base.clone(), q(), chain_p(), 22).unwrap();
    let no_i = Model::new(ModelConfig { ablation: Ablation::NoPersonalization, ..base }, q(), chain_p(), 22).unwrap();
    let a = full.predict(&seq).unwrap();
    let b = no_i.predict(&seq).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.1.to_bits(), y.1.to_bits());
    }
}

#[test]
fn ablations_change_predictions_when_their_component_is_active() {
    let seq = sequence(random_steps(12, 12));
    let full = Model::new(tiny_config(), q(), chain_p(), 23).unwrap().predict(&seq).unwrap();
    for ablation in [Ablation::NoPMatrix, Ablation::NoPersonalization, Ablation::NoLearningModule, Ablation::NoForgetting] {
        let cfg = ModelConfig { ablation, ..tiny_config() };
        let other = Model::new(cfg, q(), chain_p(), 23).unwrap().predict(&seq).unwrap();
        assert_ne!(full, other, "{ablation}");
    }
}

#[test]
fn review_window_zero_differs_from_attention_but_is_deterministic() {
    let seq = sequence(random_steps(10, 13));
    let off = ModelConfig { review_window: 0, ..tiny_config() };
    let a = Model::new(off.clone(), q(), chain_p(), 24).unwrap().predict(&seq).unwrap();
    let b = Model::new(off, q(), chain_p(), 24).unwrap().predict(&seq).unwrap();
    assert_eq!(a, b);
    let on = Model::new(tiny_config(), q(), chain_p(), 24).unwrap().predict(&seq).unwrap();
    assert_ne!(a, on);
}

#[test]
fn traces_report_forgetting_weight_of_nearest_prerequisite() {
    let cfg = tiny_config();
    let model = Model::new(cfg, q(), chain_p(), 25).unwrap();
    let ex_of = |c: usize| c; // exercise c has concept c for c < K
    let mut steps = Vec::new();
    for (c, it_days) in [(0usize, 0.0), (2, 0.5), (1, 1.25)] {
        steps.push(Step {
            exercise: ex_of(c),
            concept: c,
            correct: true,
            answer_time_s: 30.0,
            interval_time_s: it_days * SECONDS_PER_DAY,
            ..Step::default()
        });
    }
    let traces = model.trace(&sequence(steps)).unwrap();
    assert_eq!(traces[0].forgetting_weight, 1.0);
    // Concept 2 has prerequisite 1, never seen before step 1.
    assert_eq!(traces[1].forgetting_weight, 1.0);
    // Concept 1's prerequisite 0 was seen at step 0: lag |(30 + 1.25d) − (30 + 0)|.
    let want = 2.0 / (1.0 + 1.25f64.exp());
    assert!((traces[2].forgetting_weight - want).abs() < 1e-12);
    assert!(traces[1..].iter().all(|t| t.prediction.is_some()));
    assert!(traces.iter().all(|t| (0.0..1.0).contains(&t.learning_gate_mean) && t.forgetting_gate_mean < 1.0));
}

#[test]
fn state_stays_finite_over_long_default_sequences() {
    let cfg = ModelConfig {
        n_exercises: N,
        n_concepts: K,
        answer_time_vocab: 10,
        interval_time_vocab: 10,
        difficulty_buckets: 5,
        accuracy_buckets: 5,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, q(), chain_p(), 26).unwrap();
    let preds = model.predict(&sequence(random_steps(500, 14))).unwrap();
    assert_eq!(preds.len(), 499);
    assert!(preds.iter().all(|p| p.1 > 0.0 && p.1 < 1.0));
}

#[test]
fn non_finite_parameters_abort_with_step_index() {
    let mut model = Model::new(tiny_config(), q(), chain_p(), 27).unwrap();
    let id = model.params.id("b4").unwrap();
    model.params.get_mut(id).tensor.data_mut()[0] = f64::NAN;
    let err = model.predict(&sequence(random_steps(4, 1))).unwrap_err();
    assert!(matches!(err, CoreError::NonFiniteState { step: 0 }), "{err}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let model = Model::new(tiny_config(), q(), chain_p(), 28).unwrap();
    let ckpt = Checkpoint::from_model(&model, 28, 3, None);
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    let (restored, _) = loaded.into_model().unwrap();
    let seq = sequence(random_steps(8, 3));
    let a = model.predict(&seq).unwrap();
    let b = restored.predict(&seq).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.1.to_bits(), y.1.to_bits());
    }
}

#[test]
fn mismatched_layouts_and_unknown_names_are_rejected() {
    let model = Model::new(tiny_config(), q(), chain_p(), 29).unwrap();
    let lpkt = ModelConfig { mode: "lpkt".into(), ..tiny_config() };
    assert!(Model::from_parts(lpkt, q(), chain_p(), model.params.clone()).is_err());
    let bad = ModelConfig { mode: "nope".into(), ..tiny_config() };
    assert!(Model::new(bad, q(), chain_p(), 1).is_err());
    let bad = ModelConfig { review_mode: "nope".into(), ..tiny_config() };
    assert!(Model::new(bad, q(), chain_p(), 1).is_err());
    assert!(Model::new(tiny_config(), q(), PMatrix::empty(K + 1), 1).is_err());
}

#[test]
fn dropout_masks_are_seeded() {
    let model = Model::new(ModelConfig { dropout: 0.5, ..tiny_config() }, q(), chain_p(), 30).unwrap();
    let steps = random_steps(6, 5);
    let run = |seed: u64| {
        let mut tape = model.tape();
        let mut drop = Dropout::new(0.5, ChaCha8Rng::seed_from_u64(seed));
        let out = model.forward(&mut tape, &steps, &mut drop, false).unwrap();
        out.predictions.iter().map(|p| tape.scalar_value(p.y)).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

// ── independent LPKT reference ─────────────────────────────────────────

struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn dense(store: &ParamStore, name: &str) -> Dense {
    let t = store.tensor(store.id(name).unwrap());
    let (rows, cols) = t.rows_cols();
    Dense { rows, cols, data: t.data().to_vec() }
}

impl Dense {
    fn row(&self, r: usize) -> Vec<f64> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }

    /// `xᵀ W + b`
    fn apply(&self, x: &[f64], b: &Dense) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        (0..self.cols)
            .map(|j| b.data[j] + (0..self.rows).map(|i| x[i] * self.data[i * self.cols + j]).sum::<f64>())
            .collect()
    }
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.concat()
}

/// Plain-loop LPKT: learning embedding, gain, gate, state update, prediction.
fn lpkt_reference(store: &ParamStore, q: &QMatrix, steps: &[Step], d: usize) -> Vec<f64> {
    let e = dense(store, "exercise_emb");
    let a = dense(store, "answer_emb");
    let at = dense(store, "answer_time_emb");
    let it = dense(store, "interval_time_emb");
    let (w1, b1) = (dense(store, "w1"), dense(store, "b1"));
    let (w2, b2) = (dense(store, "w2"), dense(store, "b2"));
    let (w3, b3) = (dense(store, "w3"), dense(store, "b3"));
    let (w4, b4) = (dense(store, "w4"), dense(store, "b4"));
    let (w5, b5) = (dense(store, "w5"), dense(store, "b5"));
    let k = q.n_concepts;
    let mut h = vec![vec![0.0; d]; k];
    let mut l_prev = vec![0.0; d];
    let mut ys = Vec::new();
    let pool = |h: &Vec<Vec<f64>>, qr: &[f64]| -> Vec<f64> {
        (0..d).map(|j| (0..k).map(|c| qr[c] * h[c][j]).sum()).collect()
    };
    for (t, s) in steps.iter().enumerate() {
        let qr = q.row(s.exercise);
        let l_t = w1.apply(&cat(&[&e.row(s.exercise), &a.row(usize::from(s.correct)), &at.row(s.answer_time_bucket)]), &b1);
        let itv = it.row(s.interval_time_bucket);
        let ht = pool(&h, qr);
        let x = cat(&[&l_prev, &itv, &l_t, &ht]);
        let lg: Vec<f64> = w2.apply(&x, &b2).iter().map(|v| v.tanh()).collect();
        let gl: Vec<f64> = w3.apply(&x, &b3).iter().map(|&v| sigmoid(v)).collect();
        let gain: Vec<f64> = gl.iter().zip(&lg).map(|(g, l)| g * (l + 1.0) / 2.0).collect();
        let mut next = vec![vec![0.0; d]; k];
        for c in 0..k {
            let gf: Vec<f64> = w4.apply(&cat(&[&h[c], &gain, &itv]), &b4).iter().map(|&v| sigmoid(v)).collect();
            for j in 0..d {
                next[c][j] = qr[c] * gain[j] + gf[j] * h[c][j];
            }
        }
        h = next;
        l_prev = l_t;
        if let Some(n) = steps.get(t + 1) {
            let ht = pool(&h, q.row(n.exercise));
            let z = w5.apply(&cat(&[&e.row(n.exercise), &ht]), &b5);
            ys.push(sigmoid(z[0]));
        }
    }
    ys
}

#[test]
fn lpkt_cell_matches_independent_reference() {
    let cfg = ModelConfig { mode: "lpkt".into(), ..tiny_config() };
    let model = Model::new(cfg, q(), chain_p(), 31).unwrap();
    let seq = sequence(random_steps(10, 6));
    let got: Vec<f64> = model.predict(&seq).unwrap().iter().map(|p| p.1).collect();
    let want = lpkt_reference(&model.params, &model.q, &seq.steps, 8);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}
