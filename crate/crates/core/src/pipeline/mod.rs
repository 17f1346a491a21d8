//! Standard training, probe training, layer selection, pruning and
//! distillation from a lower layer.

mod kd;
mod rules;
mod run;
mod train;

pub use kd::{distill, distill_with_targets, kd_targets, tune_lambda, KdConfig, Tuned};
pub use rules::{
    choose_lambda, gt_prob_incorrect, select_source_layer, select_target_layer, CandidateOutcome,
    LambdaChoice, ProbeReport, PruneDecision,
};
pub use run::{
    compress, run_full_pipeline, Compressed, PipelineConfig, PipelineReport, PipelineResult,
    Variant,
};
pub use train::{TrainConfig, TrainLog};

use crate::data::{argmax, Dataset};
use crate::error::{Error, Result};
use crate::metrics::mean_entropy;
use crate::model::LayeredClassifier;
use crate::netcore::{softmax_rows, Matrix};

pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_LAMBDAS: [f64; 4] = [0.6, 0.7, 0.8, 0.9];

/// Trains the model's unfrozen parameters with one-hot cross-entropy on the
/// gold labels.
pub fn train_standard(
    model: &mut LayeredClassifier,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    train_on_targets(model, train, &train.one_hot(), cfg)
}

/// Same as [`train_standard`] with arbitrary per-sample target distributions.
pub fn train_on_targets(
    model: &mut LayeredClassifier,
    train: &Dataset,
    targets: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.epochs == 0 {
        return Ok(TrainLog::default());
    }
    train::fit_head(model, &train.features(), targets, cfg)
}

fn probe_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Attaches fresh probes after blocks `1..n−1`, freezes the backbone and the
/// head, and trains the probes with one-hot cross-entropy. Probes end up
/// frozen. Existing probes are only replaced when `retrain` is set.
pub fn train_probes(
    model: &mut LayeredClassifier,
    train: &Dataset,
    cfg: &TrainConfig,
    retrain: bool,
) -> Result<TrainLog> {
    if !model.probes().is_empty() && !retrain {
        return Err(Error::invalid(
            "model already carries trained probes; pass retrain to replace them",
        ));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers: Vec<usize> = (1..model.depth()).collect();
    model.attach_probes(&layers, probe_seed(cfg.seed))?;
    model.freeze_backbone();
    let log = train::fit_probes(model, &train.features(), &train.one_hot(), cfg)?;
    for &l in &layers {
        model.probe_mut(l).expect("attached").frozen = true;
    }
    Ok(log)
}

/// Eval-mode accuracy against gold labels and mean entropy at every layer;
/// the top entry comes from the head.
pub fn probe_report(model: &LayeredClassifier, val: &Dataset) -> Result<ProbeReport> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = model.depth();
    let hidden = model.hidden_states(&val.features(), n)?;
    let labels = val.labels();
    let mut accuracy = Vec::with_capacity(n);
    let mut entropy = Vec::with_capacity(n);
    for layer in 1..=n {
        let head = if layer == n {
            model.head()
        } else {
            &model
                .probe(layer)
                .ok_or(Error::InvalidLayer {
                    index: layer,
                    reason: "probe report needs a probe after every block below the head".into(),
                })?
                .head
        };
        let probs = softmax_rows(&head.infer(&hidden[layer - 1])?)?;
        accuracy.push(gold_accuracy(&probs, &labels));
        entropy.push(mean_entropy(&probs));
    }
    Ok(ProbeReport {
        original_acc: accuracy[n - 1],
        accuracy,
        entropy,
    })
}

/// Fraction of rows whose argmax equals the gold label.
pub fn gold_accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = probs
        .iter_rows()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// [`gt_prob_incorrect`] of the model's eval-mode predictions on `val`.
pub fn avg_gt_prob_incorrect(model: &LayeredClassifier, val: &Dataset) -> Result<Option<f64>> {
    Ok(gt_prob_incorrect(
        &model.predict(&val.features())?,
        &val.labels(),
    ))
}
