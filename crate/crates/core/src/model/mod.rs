//! The layered classifier: encoder blocks, a classifier head and optional
//! internal probes, with per-component freezing, pruning and checkpoints.

mod block;
mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use block::{EncoderBlock, Probe};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint};

use crate::error::{Error, Result};
use crate::netcore::{
    dropout_forward, softmax_rows, Activation, DenseLayer, DropoutSpec, Init, Matrix, Mode,
    ParamMut,
};

/// Shape and wiring of a [`LayeredClassifier`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub width: usize,
    /// Number of encoder blocks `n`.
    pub depth: usize,
    pub num_classes: usize,
    /// Activation of blocks `2..=n`.
    #[serde(default)]
    pub activation: Activation,
    /// Activation of block 1, the input projection.
    #[serde(default = "default_first_activation")]
    pub first_activation: Activation,
    /// Whether blocks `2..=n` add their output to their input.
    #[serde(default = "default_true")]
    pub residual: bool,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Dropout applied to probe inputs while training probes.
    #[serde(default)]
    pub probe_dropout: f64,
}

fn default_first_activation() -> Activation {
    Activation::Identity
}

fn default_true() -> bool {
    true
}

fn default_dropout() -> f64 {
    0.1
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: 16,
            width: 64,
            depth: 8,
            num_classes: 4,
            activation: Activation::Relu,
            first_activation: Activation::Identity,
            residual: true,
            dropout: 0.1,
            probe_dropout: 0.0,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.depth == 0 {
            return Err(Error::invalid(
                "input_dim, width and depth must be positive",
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        for (name, rate) in [
            ("dropout", self.dropout),
            ("probe_dropout", self.probe_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::invalid(format!("{name} {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn block_params(&self, index: usize) -> usize {
        let fan_in = if index == 1 {
            self.input_dim
        } else {
            self.width
        };
        fan_in * self.width + self.width
    }

    pub fn head_params(&self) -> usize {
        self.width * self.num_classes + self.num_classes
    }

    /// Parameter count of a probe-free model with `depth` blocks.
    pub fn backbone_params(&self, depth: usize) -> usize {
        (1..=depth).map(|i| self.block_params(i)).sum::<usize>() + self.head_params()
    }
}

/// Which parameters are excluded from training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub blocks: Vec<bool>,
    pub head: bool,
}

impl FreezeMask {
    pub fn all_trainable(depth: usize) -> Self {
        Self {
            blocks: vec![false; depth],
            head: false,
        }
    }
}

/// Output of [`LayeredClassifier::forward_all`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Output of every block that was run, lowest first.
    pub hidden: Vec<Matrix>,
    /// `(attach_after, distribution)` for every probe above the start layer.
    pub probe_probs: Vec<(usize, Matrix)>,
    pub head_logits: Matrix,
    pub head_probs: Matrix,
}

#[derive(Debug, Clone)]
pub struct LayeredClassifier {
    arch: Architecture,
    blocks: Vec<EncoderBlock>,
    head: DenseLayer,
    probes: Vec<Probe>,
    freeze: FreezeMask,
    rng: ChaCha8Rng,
    /// Layer index the last recorded forward pass started from.
    recorded_from: Option<usize>,
}

impl LayeredClassifier {
    /// Randomly initialized model; `seed` drives both the initial weights
    /// and the dropout stream.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (1..=arch.depth)
            .map(|i| {
                let fan_in = if i == 1 { arch.input_dim } else { arch.width };
                let dense = DenseLayer::new(fan_in, arch.width, Init::FanInUniform, &mut init_rng);
                Self::make_block(&arch, i, dense)
            })
            .collect();
        let head = DenseLayer::new(
            arch.width,
            arch.num_classes,
            Init::FanInUniform,
            &mut init_rng,
        );
        Ok(Self::assemble(arch, blocks, head, seed))
    }

    /// Model with every parameter set to zero.
    pub fn zeroed(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let blocks = (1..=arch.depth)
            .map(|i| {
                let fan_in = if i == 1 { arch.input_dim } else { arch.width };
                Self::make_block(&arch, i, DenseLayer::zeros(fan_in, arch.width))
            })
            .collect();
        let head = DenseLayer::zeros(arch.width, arch.num_classes);
        Ok(Self::assemble(arch, blocks, head, 0))
    }

    fn make_block(arch: &Architecture, index: usize, dense: DenseLayer) -> EncoderBlock {
        let (activation, residual) = if index == 1 {
            (arch.first_activation, false)
        } else {
            (arch.activation, arch.residual)
        };
        EncoderBlock::new(index, dense, activation, arch.dropout, residual)
    }

    fn assemble(
        arch: Architecture,
        blocks: Vec<EncoderBlock>,
        head: DenseLayer,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let freeze = FreezeMask::all_trainable(arch.depth);
        Self {
            arch,
            blocks,
            head,
            probes: Vec::new(),
            freeze,
            rng,
            recorded_from: None,
        }
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        blocks: Vec<EncoderBlock>,
        head: DenseLayer,
        probes: Vec<Probe>,
        freeze: FreezeMask,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            arch,
            blocks,
            head,
            probes,
            freeze,
            rng,
            recorded_from: None,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn blocks(&self) -> &[EncoderBlock] {
        &self.blocks
    }

    pub fn head(&self) -> &DenseLayer {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut DenseLayer {
        &mut self.head
    }

    pub fn block_mut(&mut self, index: usize) -> Option<&mut EncoderBlock> {
        index.checked_sub(1).and_then(|i| self.blocks.get_mut(i))
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn probe(&self, layer: usize) -> Option<&Probe> {
        self.probes.iter().find(|p| p.attach_after == layer)
    }

    pub fn probe_mut(&mut self, layer: usize) -> Option<&mut Probe> {
        self.probes.iter_mut().find(|p| p.attach_after == layer)
    }

    pub fn freeze_mask(&self) -> &FreezeMask {
        &self.freeze
    }

    pub fn set_freeze_mask(&mut self, mask: FreezeMask) -> Result<()> {
        if mask.blocks.len() != self.depth() {
            return Err(Error::invalid(format!(
                "freeze mask covers {} blocks, model has {}",
                mask.blocks.len(),
                self.depth()
            )));
        }
        self.freeze = mask;
        Ok(())
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Restarts the dropout stream.
    pub fn reseed_dropout(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        self.rng = rng;
    }

    /// Sets the dropout rate of every block (MC dropout uses this on models
    /// trained with a different rate).
    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        DropoutSpec::new(rate, Mode::Train)?;
        for b in &mut self.blocks {
            b.dropout_rate = rate;
        }
        Ok(())
    }

    /// Replaces all probes with freshly initialized ones at `layers`.
    pub fn attach_probes(&mut self, layers: &[usize], seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probes = Vec::with_capacity(layers.len());
        let mut sorted = layers.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for layer in sorted {
            if layer == 0 || layer >= self.depth() {
                return Err(Error::InvalidLayer {
                    index: layer,
                    reason: format!("probes attach to layers 1..={}", self.depth() - 1),
                });
            }
            let head = DenseLayer::new(
                self.arch.width,
                self.arch.num_classes,
                Init::FanInUniform,
                &mut rng,
            );
            probes.push(Probe::new(layer, head));
        }
        self.probes = probes;
        Ok(())
    }

    pub fn detach_probes(&mut self) {
        self.probes.clear();
    }

    /// Exact number of scalar parameters, attached probes included.
    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .map(EncoderBlock::param_count)
            .sum::<usize>()
            + self.head.param_count()
            + self.probes.iter().map(Probe::param_count).sum::<usize>()
    }

    fn check_input(&self, x: &Matrix, start: usize) -> Result<()> {
        let want = if start == 0 {
            self.arch.input_dim
        } else {
            self.arch.width
        };
        if x.cols() != want {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: x.shape(),
                right: (x.rows(), want),
            });
        }
        Ok(())
    }

    /// Eval-mode outputs of blocks `1..=upto`.
    pub fn hidden_states(&self, x: &Matrix, upto: usize) -> Result<Vec<Matrix>> {
        self.check_input(x, 0)?;
        let mut out = Vec::with_capacity(upto);
        let mut h = x.clone();
        for b in self.blocks.iter().take(upto) {
            h = b.infer(&h)?;
            out.push(h.clone());
        }
        Ok(out)
    }

    /// Eval-mode head logits.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let hidden = self.hidden_states(x, self.depth())?;
        let top = hidden.last().cloned().unwrap_or_else(|| x.clone());
        self.head.infer(&top)
    }

    /// Eval-mode head distribution.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        softmax_rows(&self.logits(x)?)
    }

    /// Eval-mode distribution of the probe at `layer`.
    pub fn probe_predict(&self, x: &Matrix, layer: usize) -> Result<Matrix> {
        let probe = self.probe(layer).ok_or(Error::InvalidLayer {
            index: layer,
            reason: "no probe attached".into(),
        })?;
        let hidden = self.hidden_states(x, layer)?;
        softmax_rows(&probe.head.infer(&hidden[layer - 1])?)
    }

    /// Runs the whole network from raw features, recording state for
    /// [`backward`](Self::backward).
    pub fn forward_all(&mut self, x: &Matrix, mode: Mode) -> Result<ForwardOutput> {
        self.forward_from(x, 0, mode)
    }

    /// Runs blocks `start+1..=n` on `h`, the output of block `start` (raw
    /// features when `start == 0`). Frozen components run in eval mode.
    pub fn forward_from(&mut self, h: &Matrix, start: usize, mode: Mode) -> Result<ForwardOutput> {
        if start > self.depth() {
            return Err(Error::InvalidLayer {
                index: start,
                reason: format!("model has {} blocks", self.depth()),
            });
        }
        self.check_input(h, start)?;
        let mut hidden = Vec::with_capacity(self.depth() - start);
        let mut cur = h.clone();
        for (i, block) in self.blocks.iter_mut().enumerate().skip(start) {
            let m = if self.freeze.blocks[i] {
                Mode::Eval
            } else {
                mode
            };
            cur = block.forward(&cur, m, &mut self.rng)?;
            hidden.push(cur.clone());
        }
        let mut probe_probs = Vec::new();
        for probe in &mut self.probes {
            if probe.attach_after <= start {
                probe.mask = None;
                continue;
            }
            let input = &hidden[probe.attach_after - start - 1];
            let m = if probe.frozen { Mode::Eval } else { mode };
            let spec = DropoutSpec {
                rate: self.arch.probe_dropout,
                mode: m,
            };
            let (dropped, mask) = dropout_forward(input, spec, &mut self.rng)?;
            probe.mask = mask;
            let logits = probe.head.forward(&dropped)?;
            probe_probs.push((probe.attach_after, softmax_rows(&logits)?));
        }
        let head_logits = self.head.forward(&cur)?;
        let head_probs = softmax_rows(&head_logits)?;
        self.recorded_from = Some(start);
        Ok(ForwardOutput {
            hidden,
            probe_probs,
            head_logits,
            head_probs,
        })
    }

    /// Backpropagates logit gradients from the head and/or probes through the
    /// pass recorded by the last `forward_*` call. Gradients accumulate only
    /// into trainable parameters.
    pub fn backward(
        &mut self,
        head_grad: Option<&Matrix>,
        probe_grads: &[(usize, Matrix)],
    ) -> Result<()> {
        let start = self
            .recorded_from
            .ok_or(Error::NoForward("layered classifier"))?;
        let depth = self.depth();
        // lowest (1-based) trainable block in the recorded range
        let lowest = (start + 1..=depth).find(|&l| !self.freeze.blocks[l - 1]);

        let mut grad_top: Option<Matrix> = None;
        if let Some(g) = head_grad {
            grad_top = self.head.backward(g, !self.freeze.head, lowest.is_some())?;
        }
        let mut carry = grad_top;
        for layer in (start + 1..=depth).rev() {
            for (at, g) in probe_grads.iter().filter(|(at, _)| *at == layer) {
                let probe = self
                    .probes
                    .iter_mut()
                    .find(|p| p.attach_after == *at)
                    .ok_or(Error::InvalidLayer {
                        index: *at,
                        reason: "no probe attached".into(),
                    })?;
                let want = lowest.is_some_and(|l| layer >= l);
                let frozen = probe.frozen;
                if let Some(mut dx) = probe.head.backward(g, !frozen, want)? {
                    if let Some(mask) = &probe.mask {
                        for (v, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                            *v *= m;
                        }
                    }
                    carry = Some(match carry {
                        Some(c) => c.add(&dx)?,
                        None => dx,
                    });
                }
            }
            let Some(l) = lowest else { continue };
            if layer < l {
                continue;
            }
            let Some(g) = carry.take() else { continue };
            let trainable = !self.freeze.blocks[layer - 1];
            carry = self.blocks[layer - 1].backward(&g, trainable, layer > l)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.dense.zero_grad();
        }
        self.head.zero_grad();
        for p in &mut self.probes {
            p.head.zero_grad();
        }
    }

    /// Drops recorded activations.
    pub fn clear_caches(&mut self) {
        for b in &mut self.blocks {
            b.clear_cache();
        }
        self.head.clear_cache();
        for p in &mut self.probes {
            p.head.clear_cache();
            p.mask = None;
        }
        self.recorded_from = None;
    }

    /// Trainable parameters with their gradients, in a fixed order.
    pub fn trainable_params(&mut self) -> Vec<ParamMut<'_>> {
        fn push<'a>(out: &mut Vec<ParamMut<'a>>, name: String, layer: &'a mut DenseLayer) {
            let DenseLayer {
                weights,
                bias,
                grad_weights,
                grad_bias,
                ..
            } = layer;
            out.push(ParamMut {
                key: format!("{name}.w"),
                values: weights.as_mut_slice(),
                grads: grad_weights.as_slice(),
            });
            out.push(ParamMut {
                key: format!("{name}.b"),
                values: bias.as_mut_slice(),
                grads: grad_bias.as_slice(),
            });
        }
        let mut out = Vec::new();
        for (b, frozen) in self.blocks.iter_mut().zip(&self.freeze.blocks) {
            if !frozen {
                push(&mut out, format!("block{}", b.index), &mut b.dense);
            }
        }
        if !self.freeze.head {
            push(&mut out, "head".into(), &mut self.head);
        }
        for p in &mut self.probes {
            if !p.frozen {
                push(&mut out, format!("probe{}", p.attach_after), &mut p.head);
            }
        }
        out
    }

    /// Every parameter value in canonical order: blocks, head, probes; each
    /// layer weights first, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        let mut push = |l: &DenseLayer| {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        };
        for b in &self.blocks {
            push(&b.dense);
        }
        push(&self.head);
        for p in &self.probes {
            push(&p.head);
        }
        out
    }

    /// Copy of the model truncated to blocks `1..=target`. For `target < n`
    /// the probe at `target` becomes the head; probes listed in `keep`
    /// (which must lie below `target`) survive, all others are dropped.
    pub fn prune_with_probes(&self, target: usize, keep: &[usize]) -> Result<Self> {
        let depth = self.depth();
        if target == 0 || target > depth {
            return Err(Error::InvalidLayer {
                index: target,
                reason: format!("target must lie in 1..={depth}"),
            });
        }
        let head = if target == depth {
            self.head.clone()
        } else {
            self.probe(target)
                .ok_or(Error::InvalidLayer {
                    index: target,
                    reason: "no trained probe at the target layer".into(),
                })?
                .head
                .clone()
        };
        let mut probes = Vec::new();
        for &k in keep {
            if k >= target {
                return Err(Error::InvalidLayer {
                    index: k,
                    reason: format!("kept probes must attach below the target layer {target}"),
                });
            }
            let p = self.probe(k).ok_or(Error::InvalidLayer {
                index: k,
                reason: "no probe attached".into(),
            })?;
            probes.push(p.clone());
        }
        probes.sort_by_key(|p| p.attach_after);
        let mut arch = self.arch.clone();
        arch.depth = target;
        let blocks = self.blocks[..target].to_vec();
        let freeze = FreezeMask {
            blocks: self.freeze.blocks[..target].to_vec(),
            head: false,
        };
        let mut pruned = Self::from_parts(arch, blocks, head, probes, freeze, self.rng.clone());
        pruned.clear_caches();
        Ok(pruned)
    }

    /// Removes blocks above `target` and every probe; the probe at `target`
    /// becomes the new head (the original head is kept when `target == n`).
    pub fn prune_above(&self, target: usize) -> Result<Self> {
        self.prune_with_probes(target, &[])
    }

    /// Freezes blocks `1..=source`; everything above becomes trainable.
    pub fn freeze_through(&mut self, source: usize) -> Result<()> {
        if source == 0 || source >= self.depth() {
            return Err(Error::InvalidLayer {
                index: source,
                reason: format!("source must lie in 1..{}", self.depth()),
            });
        }
        for (i, f) in self.freeze.blocks.iter_mut().enumerate() {
            *f = i < source;
        }
        self.freeze.head = false;
        Ok(())
    }

    /// Freezes every block and the head.
    pub fn freeze_backbone(&mut self) {
        self.freeze.blocks.fill(true);
        self.freeze.head = true;
    }

    pub fn unfreeze_all(&mut self) {
        self.freeze = FreezeMask::all_trainable(self.depth());
        for p in &mut self.probes {
            p.frozen = false;
        }
    }

    /// Number of leading frozen blocks; their eval-mode outputs can be cached.
    pub fn frozen_prefix(&self) -> usize {
        self.freeze.blocks.iter().take_while(|&&f| f).count()
    }

    /// Draws a `u64` from the dropout stream (used to derive sub-seeds).
    pub fn next_seed(&mut self) -> u64 {
        self.rng.random()
    }
}

#[cfg(test)]
mod tests;
