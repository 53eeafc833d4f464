//! Sentence decomposition by graph editing: a word relation graph over the
//! input, one Accept/Break/Copy/Drop edit per edge, and a segmenter that
//! renders each connected component as a simple sentence.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod segmenter;
pub mod supervision;
pub mod wrg;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

pub type Tensor32 = numerics::Tensor<f32>;
pub type Tensor64 = numerics::Tensor<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type ModelState32 = model::ModelState<f32>;
pub type ModelState64 = model::ModelState<f64>;
