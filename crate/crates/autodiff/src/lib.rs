//! Minimal dense-tensor math with tape-based reverse-mode differentiation.
//!
//! Values are recorded on a [`Tape`] during the forward pass; [`Tape::backward`]
//! walks the recorded nodes in exact reverse order and accumulates parameter
//! gradients into a [`Gradients`] buffer. Parameters live in a [`ParamStore`]
//! that the tape borrows immutably, so one store can serve many tapes
//! (one per sequence) while gradients are reduced in a fixed order.
//!
//! ```
//! use cpf_autodiff::{Gradients, ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::scalar(0.0));
//! let mut tape = Tape::new(&store);
//! let x = tape.param(w);
//! let y = tape.sigmoid(x);
//! let mut grads = Gradients::zeros_like(&store);
//! tape.backward(y, 1.0, &mut grads).unwrap();
//! assert!((grads.get(w)[0] - 0.25).abs() < 1e-15);
//! ```

mod adam;
mod error;
mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use error::AutodiffError;
pub use gradcheck::{finite_diff_check, BlockReport, GradCheckReport};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
pub use tensor::{sigmoid, Tensor};

pub type Result<T> = std::result::Result<T, AutodiffError>;
