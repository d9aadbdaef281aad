use cpf_autodiff::{finite_diff_check, AutodiffError, GradCheckReport, ParamStore, Tape, Var};

use crate::data::StudentSequence;
use crate::model::{Dropout, Model, Prediction};
use crate::{CoreError, Result};

/// Sum of clamped BCE terms; `None` when there are no predictions.
pub fn sum_bce(tape: &mut Tape<'_>, preds: &[Prediction]) -> Result<Option<Var>> {
    if preds.is_empty() {
        return Ok(None);
    }
    let terms = preds
        .iter()
        .map(|p| tape.bce(p.y, if p.label { 1.0 } else { 0.0 }))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Some(tape.add_all(&terms)?))
}

/// Mean BCE over every prediction in `sequences` plus `l2 · ‖θ‖²`, on one tape.
pub fn full_loss(model: &Model, tape: &mut Tape<'_>, sequences: &[&StudentSequence], l2: f64) -> Result<Var> {
    let mut sums = Vec::new();
    let mut count = 0;
    for seq in sequences {
        let out = model.forward(tape, seq.valid_steps(), &mut Dropout::off(), false)?;
        count += out.predictions.len();
        if let Some(s) = sum_bce(tape, &out.predictions)? {
            sums.push(s);
        }
    }
    if count == 0 {
        return Err(CoreError::Data("no predictions in batch".into()));
    }
    let total = tape.add_all(&sums)?;
    let mut loss = tape.scale(total, 1.0 / count as f64);
    if l2 > 0.0 {
        let ids: Vec<_> = tape.store().ids().collect();
        let mut squares = Vec::with_capacity(ids.len());
        for id in ids {
            let p = tape.param(id);
            squares.push(tape.sum_squares(p));
        }
        let sq = tape.add_all(&squares)?;
        let sq = tape.scale(sq, l2);
        loss = tape.add(loss, sq)?;
    }
    Ok(loss)
}

/// Finite-difference check of [`full_loss`] over every parameter block.
pub fn gradcheck_model(
    model: &mut Model,
    sequences: &[&StudentSequence],
    l2: f64,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut store = std::mem::replace(&mut model.params, ParamStore::new());
    let mut failure: Option<CoreError> = None;
    let report = finite_diff_check(&mut store, h, tol, |tape| match full_loss(model, tape, sequences, l2) {
        Ok(v) => Ok(v),
        Err(CoreError::Autodiff(e)) => Err(e),
        Err(other) => {
            let msg = other.to_string();
            failure = Some(other);
            Err(AutodiffError::UnknownParameter(msg))
        }
    });
    model.params = store;
    match (report, failure) {
        (_, Some(e)) => Err(e),
        (r, None) => Ok(r?),
    }
}
