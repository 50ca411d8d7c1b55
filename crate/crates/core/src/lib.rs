//! Doubly regularised training with entropy-penalised observation weights.

pub mod cli;
pub mod data;
pub mod drfit;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod tensor_nn;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
