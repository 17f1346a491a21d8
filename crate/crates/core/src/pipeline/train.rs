use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayeredClassifier;
use crate::netcore::{
    batch_cross_entropy, dropout_forward, softmax_ce_grad, softmax_rows, AdamW, AdamWConfig,
    DropoutSpec, Matrix, Mode,
};

/// Optimization settings shared by every training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Linearly decay the learning rate to zero over the run.
    pub lr_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            epochs: 60,
            batch_size: 32,
            weight_decay: 0.1,
            seed: 0,
            lr_decay: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!(
                "invalid weight decay {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamW {
        AdamW::new(AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        })
    }

    fn lr_at(&self, step: usize, total: usize) -> f64 {
        if self.lr_decay && total > 0 {
            self.learning_rate * (1.0 - step as f64 / total as f64)
        } else {
            self.learning_rate
        }
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch index order: one shuffled permutation per epoch from a stream
/// that depends only on the config seed.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch: usize,
}

impl Batches {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        Self {
            rng,
            order: (0..n).collect(),
            batch: cfg.batch_size,
        }
    }

    fn epoch(&mut self) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.order
            .chunks(self.batch)
            .map(<[usize]>::to_vec)
            .collect()
    }

    fn per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch)
    }
}

/// Trains every unfrozen block and the head toward soft `targets` with
/// cross-entropy. Frozen leading blocks are evaluated once and cached.
pub(crate) fn fit_head(
    model: &mut LayeredClassifier,
    x: &Matrix,
    targets: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.shape() != (x.rows(), model.num_classes()) {
        return Err(Error::ShapeMismatch {
            op: "training targets",
            left: targets.shape(),
            right: (x.rows(), model.num_classes()),
        });
    }
    let start = model.frozen_prefix();
    let cached = if start == 0 {
        x.clone()
    } else {
        model.hidden_states(x, start)?.pop().expect("start >= 1")
    };
    model.reseed_dropout(cfg.seed);
    model.zero_grad();
    let mut opt = cfg.optimizer();
    let mut batches = Batches::new(x.rows(), cfg);
    let total = cfg.epochs * batches.per_epoch();
    let mut log = TrainLog::default();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for idx in batches.epoch() {
            let hb = cached.select_rows(&idx);
            let tb = targets.select_rows(&idx);
            let out = model.forward_from(&hb, start, Mode::Train)?;
            loss_sum += batch_cross_entropy(&out.head_probs, &tb)? * idx.len() as f64;
            let grad = softmax_ce_grad(&out.head_probs, &tb)?;
            model.backward(Some(&grad), &[])?;
            let lr = cfg.lr_at(step, total);
            opt.step_with_lr(lr, model.trainable_params())?;
            model.zero_grad();
            step += 1;
        }
        log.epoch_loss.push(loss_sum / x.rows() as f64);
    }
    model.clear_caches();
    Ok(log)
}

/// Trains the unfrozen probes toward `targets` on cached eval-mode hidden
/// states. Probes have disjoint parameters, so minimizing the summed loss
/// jointly is the same as one shared-batch loop over each probe.
pub(crate) fn fit_probes(
    model: &mut LayeredClassifier,
    x: &Matrix,
    targets: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let layers: Vec<usize> = model
        .probes()
        .iter()
        .filter(|p| !p.frozen)
        .map(|p| p.attach_after)
        .collect();
    let Some(&top) = layers.iter().max() else {
        return Ok(TrainLog::default());
    };
    let hidden = model.hidden_states(x, top)?;
    let rate = model.architecture().probe_dropout;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(3);
    let mut opt = cfg.optimizer();
    let mut batches = Batches::new(x.rows(), cfg);
    let total = cfg.epochs * batches.per_epoch();
    let mut log = TrainLog::default();
    let mut step = 0;
    model.zero_grad();
    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for idx in batches.epoch() {
            let tb = targets.select_rows(&idx);
            for &layer in &layers {
                let hb = hidden[layer - 1].select_rows(&idx);
                let (hb, _) = dropout_forward(
                    &hb,
                    DropoutSpec {
                        rate,
                        mode: Mode::Train,
                    },
                    &mut dropout_rng,
                )?;
                let probe = model.probe_mut(layer).expect("listed probe");
                let probs = softmax_rows(&probe.head.forward(&hb)?)?;
                loss_sum += batch_cross_entropy(&probs, &tb)? * idx.len() as f64;
                let grad = softmax_ce_grad(&probs, &tb)?;
                probe.head.backward(&grad, true, false)?;
            }
            let lr = cfg.lr_at(step, total);
            opt.step_with_lr(lr, model.trainable_params())?;
            model.zero_grad();
            step += 1;
        }
        log.epoch_loss.push(loss_sum / x.rows() as f64);
    }
    model.clear_caches();
    Ok(log)
}
