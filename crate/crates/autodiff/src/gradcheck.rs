use serde::{Deserialize, Serialize};

use crate::{Gradients, ParamStore, Result, Tape, Var};

/// Below this magnitude a gradient pair is compared in absolute terms; central
/// differences at h = 1e-5 carry ~1e-10 absolute error, so relative error is
/// meaningless for smaller gradients.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_analytic: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub h: f64,
    pub tol: f64,
    pub loss: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Compares the tape gradient of `loss_fn` with central differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every entry of every parameter.
///
/// `loss_fn` must build a scalar loss on the tape it is given and be a pure
/// function of the store (reseed any randomness inside it).
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    h: f64,
    tol: f64,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var>,
{
    let (loss, analytic) = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        let mut grads = Gradients::zeros_like(store);
        tape.backward(loss, 1.0, &mut grads)?;
        (tape.scalar_value(loss), grads)
    };

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let l = loss_fn(&mut tape)?;
        Ok(tape.scalar_value(l))
    };

    let ids: Vec<_> = store.ids().collect();
    let mut blocks = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.tensor(id).len();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut max_analytic: f64 = 0.0;
        for i in 0..n {
            let orig = store.tensor(id).data()[i];
            store.get_mut(id).tensor.data_mut()[i] = orig + h;
            let plus = eval(store)?;
            store.get_mut(id).tensor.data_mut()[i] = orig - h;
            let minus = eval(store)?;
            store.get_mut(id).tensor.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(id)[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
            max_analytic = max_analytic.max(a.abs());
        }
        blocks.push(BlockReport {
            name: store.get(id).name.clone(),
            entries: n,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            max_analytic,
            passed: max_rel < tol,
        });
    }
    Ok(GradCheckReport {
        h,
        tol,
        loss,
        blocks,
    })
}
