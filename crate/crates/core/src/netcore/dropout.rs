use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. The random stream lives with the owner of the layer so a
/// whole model can be replayed from one generator state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: Mode,
}

impl DropoutSpec {
    pub fn new(rate: f64, mode: Mode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        Ok(Self { rate, mode })
    }
}

/// Applies dropout, returning the output and the scaled keep-mask (`None`
/// when the layer is the identity).
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &Matrix,
    spec: DropoutSpec,
    rng: &mut R,
) -> Result<(Matrix, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(Error::invalid(format!(
            "dropout rate {} outside [0, 1)",
            spec.rate
        )));
    }
    if spec.mode == Mode::Eval || spec.rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let scale = 1.0 / (1.0 - spec.rate);
    let mask: Vec<f64> = (0..x.as_slice().len())
        .map(|_| {
            if rng.random::<f64>() < spec.rate {
                0.0
            } else {
                scale
            }
        })
        .collect();
    let mut out = x.clone();
    for (o, m) in out.as_mut_slice().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((out, Some(mask)))
}
