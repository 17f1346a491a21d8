use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: &Matrix) -> Matrix {
        match self {
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::Tanh => x.map(f64::tanh),
            Activation::Identity => x.clone(),
        }
    }

    /// Gradient through the activation, given its output `y`.
    pub fn backward(self, y: &Matrix, grad: &Matrix) -> Matrix {
        debug_assert_eq!(y.shape(), grad.shape());
        let mut out = grad.clone();
        match self {
            Activation::Relu => {
                for (g, &v) in out.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &v) in out.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *g *= 1.0 - v * v;
                }
            }
            Activation::Identity => {}
        }
        out
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}
