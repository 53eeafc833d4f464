//! Dense tensors, a reverse-mode tape, an LSTM cell and Adam.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use lstm::{lstm_step, run_lstm, LstmParams};
pub use scalar::Scalar;
pub use tape::{NodeId, Tape, PROB_FLOOR};
pub use tensor::{ParamGrads, ParamId, ParamStore, Tensor};
