//! Dense matrices and a taped reverse-mode gradient engine.
//!
//! Every trainable piece of the model records its forward computation on a
//! [`Tape`]; a single [`Tape::backward`] call then pushes gradients of the
//! scalar objective into the [`ParamSet`] that owns the weights.

mod activation;
mod matrix;
mod params;
mod tape;

pub use activation::{sigmoid, Activation};
pub use matrix::Matrix;
pub use params::{AdamConfig, ParamId, ParamSet};
pub use tape::{EdgeIndex, Gradients, Tape, Var};

pub(crate) use matrix::gemm;
