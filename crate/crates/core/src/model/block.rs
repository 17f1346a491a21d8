use rand::Rng;

use crate::error::Result;
use crate::netcore::{dropout_forward, Activation, DenseLayer, DropoutSpec, Matrix, Mode};

/// One encoder layer: `h' = [h +] dropout(act(h · W + b))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    /// 1-based position in the backbone.
    pub index: usize,
    pub dense: DenseLayer,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub residual: bool,
    cache: Option<BlockCache>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    activated: Matrix,
    mask: Option<Vec<f64>>,
}

impl EncoderBlock {
    pub fn new(
        index: usize,
        dense: DenseLayer,
        activation: Activation,
        dropout_rate: f64,
        residual: bool,
    ) -> Self {
        Self {
            index,
            dense,
            activation,
            dropout_rate,
            residual,
            cache: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.dense.param_count()
    }

    /// Eval-mode output without recording anything.
    pub fn infer(&self, h: &Matrix) -> Result<Matrix> {
        let a = self.activation.apply(&self.dense.infer(h)?);
        if self.residual {
            h.add(&a)
        } else {
            Ok(a)
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        h: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Matrix> {
        let z = self.dense.forward(h)?;
        let activated = self.activation.apply(&z);
        let spec = DropoutSpec {
            rate: self.dropout_rate,
            mode,
        };
        let (dropped, mask) = dropout_forward(&activated, spec, rng)?;
        self.cache = Some(BlockCache { activated, mask });
        if self.residual {
            h.add(&dropped)
        } else {
            Ok(dropped)
        }
    }

    /// Returns the gradient with respect to the block input when `want_input`.
    pub fn backward(
        &mut self,
        grad_out: &Matrix,
        trainable: bool,
        want_input: bool,
    ) -> Result<Option<Matrix>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(crate::Error::NoForward("encoder block"))?;
        let mut g = grad_out.clone();
        if let Some(mask) = &cache.mask {
            for (v, m) in g.as_mut_slice().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        let g = self.activation.backward(&cache.activated, &g);
        let dx = self.dense.backward(&g, trainable, want_input)?;
        match dx {
            Some(dx) if self.residual => Ok(Some(dx.add(grad_out)?)),
            other => Ok(other),
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        self.dense.clear_cache();
    }
}

/// Internal classifier attached after block `attach_after`.
#[derive(Debug, Clone)]
pub struct Probe {
    pub attach_after: usize,
    pub head: DenseLayer,
    pub frozen: bool,
    pub(crate) mask: Option<Vec<f64>>,
}

impl Probe {
    pub fn new(attach_after: usize, head: DenseLayer) -> Self {
        Self {
            attach_after,
            head,
            frozen: false,
            mask: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.head.param_count()
    }
}
