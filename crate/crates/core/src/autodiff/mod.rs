//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! The [`Tape`] records primitive operations as they execute and replays them
//! in reverse on [`Tape::backward`]. Elementwise binary ops broadcast only over
//! the leading (row) axis: an operand with a single row is repeated across the
//! other's rows.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference, grad_check};
pub use tape::{Tape, Var};
pub use tensor::Tensor;


use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("slice {start}..{end} out of range for shape {shape:?}")]
    Slice {
        shape: Vec<usize>,
        start: usize,
        end: usize,
    },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("finite-difference step {0} outside (0, 1e-3]")]
    Step(f64),
}

impl AdError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        AdError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
