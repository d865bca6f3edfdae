//! Minimal dense-tensor kernel with reverse-mode differentiation: exactly
//! the blocks the fusion and blackbox models need, nothing more.

pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use params::{AdamState, ParamMap};
pub use tape::{lstm_cell, Gradients, LstmCellVars, Tape, Var};
pub use tensor::Tensor;
