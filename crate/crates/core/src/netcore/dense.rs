use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};

/// Parameter initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and bias.
    FanInUniform,
    Zeros,
}

/// Fully connected layer computing `x · W + b` with `W` stored `[in × out]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub grad_weights: Matrix,
    pub grad_bias: Vec<f64>,
    input: Option<Matrix>,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, init: Init, rng: &mut R) -> Self {
        let mut layer = Self::zeros(fan_in, fan_out);
        if init == Init::FanInUniform {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = rng.random_range(-bound..bound);
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-bound..bound);
            }
        }
        layer
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
            grad_weights: Matrix::zeros(fan_in, fan_out),
            grad_bias: vec![0.0; fan_out],
            input: None,
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::ShapeMismatch {
                op: "dense bias",
                left: weights.shape(),
                right: (bias.len(), 1),
            });
        }
        let (r, c) = weights.shape();
        Ok(Self {
            weights,
            bias,
            grad_weights: Matrix::zeros(r, c),
            grad_bias: vec![0.0; c],
            input: None,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// Stateless affine map `x · W + b`.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.fan_in() {
            return Err(Error::ShapeMismatch {
                op: "affine_forward",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        let mut out = x.matmul(&self.weights)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("affine_forward"));
        }
        Ok(out)
    }

    /// Like [`infer`](Self::infer) but records the input for `backward`.
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    /// Backpropagates `grad_out`. Parameter gradients are accumulated only
    /// when `trainable`; the input gradient is returned when `want_input`.
    pub fn backward(
        &mut self,
        grad_out: &Matrix,
        trainable: bool,
        want_input: bool,
    ) -> Result<Option<Matrix>> {
        let input = self.input.as_ref().ok_or(Error::NoForward("dense layer"))?;
        if grad_out.rows() != input.rows() || grad_out.cols() != self.fan_out() {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                left: grad_out.shape(),
                right: (input.rows(), self.fan_out()),
            });
        }
        if trainable {
            input.add_transpose_matmul(grad_out, &mut self.grad_weights)?;
            for r in 0..grad_out.rows() {
                for (g, d) in self.grad_bias.iter_mut().zip(grad_out.row(r)) {
                    *g += d;
                }
            }
        }
        if want_input {
            Ok(Some(grad_out.matmul_transpose(&self.weights)?))
        } else {
            Ok(None)
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.as_mut_slice().fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
