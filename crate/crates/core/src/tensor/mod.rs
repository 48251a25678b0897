//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records primitive operations during the forward pass and
//! replays them in reverse to accumulate gradients. Tensors are immutable
//! values; a tape is single-threaded and rebuilt for every optimization
//! step. Parallel workers each own an independent tape.

mod conv;
mod tape;

pub use tape::{Gradients, Tape, Var};

use std::sync::Arc;

use crate::error::{CoreError, Result};

/// Immutable dense array of 64-bit floats with a row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != values.len() {
            return Err(CoreError::ShapeMismatch {
                op: "tensor_new".into(),
                lhs: shape.clone(),
                rhs: vec![values.len()],
            });
        }
        Ok(Self { shape, values: Arc::new(values) })
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], values: Arc::new(vec![v]) }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), values: Arc::new(vec![0.0; n]) }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { shape: vec![values.len()], values: Arc::new(values) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    /// Extract the single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the same storage under a new shape of equal length.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.values.len() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape".into(),
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Self { shape, values: Arc::clone(&self.values) })
    }

    pub(crate) fn values_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.values)
    }
}
