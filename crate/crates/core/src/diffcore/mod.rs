//! Dense reverse-mode automatic differentiation sized for small LSTM/FNN
//! networks, plus the Adam optimizer and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, Adam, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheck, DEFAULT_FD_STEP};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::population_std;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match buffer of length {len}")]
    BufferLength { shape: Vec<usize>, len: usize },
    #[error("{op}: input {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward on an empty tape")]
    EmptyTape,
    #[error("unknown tape node {0}")]
    UnknownVar(usize),
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("objective returned a non-finite value")]
    NonFiniteObjective,
    #[error("{0}")]
    InvalidArgument(String),
}

#[cfg(test)]
mod op_tests;
