//! Dense tensors, a reverse-mode tape, LSTM cells and AdamW.

mod gradcheck;
mod lstm;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use lstm::{lstm_cell, LstmParams};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Init, ParamId, ParamSet, Parameter};
pub use tape::{bce_value, Gradients, Tape, Var, PROB_CLAMP};
pub use tensor::{Scalar, Tensor};
