//! Minimal differentiable numerics: sparse matrices, a reverse-mode tape,
//! finite-difference gradient checking and Adam.

mod adam;
mod gradcheck;
mod sparse;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use sparse::CsrMatrix;
pub use tape::{logsumexp, masked_lse, Gradients, Tape, Var, NORM_EPS};

use ndarray::Array2;

use crate::{Error, Result};

/// A trainable matrix together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl ParamTensor {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.dim());
        Self { value, grad }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Adds `g` into the accumulated gradient.
    pub fn accumulate(&mut self, g: &Array2<f64>) -> Result<()> {
        if g.dim() != self.grad.dim() {
            return Err(Error::DimensionMismatch(format!(
                "gradient {:?} for parameter {:?}",
                g.dim(),
                self.grad.dim()
            )));
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        self.grad += g;
        Ok(())
    }
}
