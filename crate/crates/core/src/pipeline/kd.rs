use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gold_accuracy;
use super::rules::{choose_lambda, gt_prob_incorrect, CandidateOutcome};
use super::train::{fit_head, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::LayeredClassifier;
use crate::netcore::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    pub candidates: Vec<f64>,
    pub selected: f64,
    pub source_layer: usize,
    pub fallback: bool,
}

/// Composite target `λ·y + (1−λ)·teacher`. Cross-entropy is linear in its
/// target, so training toward it minimizes
/// `λ·CE(ŷ, y) + (1−λ)·CE(ŷ, teacher)` with the same gradient.
pub fn kd_targets(labels: &Matrix, teacher: &Matrix, lambda: f64) -> Result<Matrix> {
    if labels.shape() != teacher.shape() {
        return Err(Error::ShapeMismatch {
            op: "distillation targets",
            left: labels.shape(),
            right: teacher.shape(),
        });
    }
    let data = labels
        .as_slice()
        .iter()
        .zip(teacher.as_slice())
        .map(|(&y, &s)| lambda * y + (1.0 - lambda) * s)
        .collect();
    Matrix::from_vec(labels.rows(), labels.cols(), data)
}

/// Distills the probe at `source` into the head of `pruned` with one-hot
/// gold labels as `y`.
pub fn distill(
    pruned: &LayeredClassifier,
    source: usize,
    lambda: f64,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<LayeredClassifier> {
    distill_with_targets(
        pruned,
        source,
        lambda,
        &train.features(),
        &train.one_hot(),
        cfg,
    )
}

/// Freezes blocks `1..=source` and trains everything above toward
/// `λ·y + (1−λ)·ȳ_s`, where `ȳ_s` is the frozen source probe's eval-mode
/// output. The returned model has its probes removed.
pub fn distill_with_targets(
    pruned: &LayeredClassifier,
    source: usize,
    lambda: f64,
    x: &Matrix,
    y: &Matrix,
    cfg: &TrainConfig,
) -> Result<LayeredClassifier> {
    if !(lambda > 0.5 && lambda <= 1.0) {
        return Err(Error::invalid(format!(
            "λ must lie in (0.5, 1], got {lambda}"
        )));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut model = pruned.clone();
    model.freeze_through(source)?;
    model
        .probe_mut(source)
        .ok_or(Error::InvalidLayer {
            index: source,
            reason: "distillation needs the source probe".into(),
        })?
        .frozen = true;
    let teacher = model.probe_predict(x, source)?;
    let targets = kd_targets(y, &teacher, lambda)?;
    if cfg.epochs > 0 {
        fit_head(&mut model, x, &targets, cfg)?;
    }
    model.detach_probes();
    model.unfreeze_all();
    Ok(model)
}

/// Result of λ tuning: the chosen configuration, the winning model and the
/// whole validation table.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub config: KdConfig,
    pub model: LayeredClassifier,
    pub table: Vec<CandidateOutcome>,
}

/// Distills once per candidate, each from the same snapshot and with the
/// same seed, scores each on `val` and applies [`choose_lambda`].
#[allow(clippy::too_many_arguments)]
pub fn tune_lambda(
    snapshot: &LayeredClassifier,
    source: usize,
    candidates: &[f64],
    x: &Matrix,
    y: &Matrix,
    val: &Dataset,
    original_acc: f64,
    tau: f64,
    cfg: &TrainConfig,
) -> Result<Tuned> {
    if candidates.is_empty() {
        return Err(Error::invalid("λ candidate list is empty"));
    }
    if let Some(bad) = candidates.iter().find(|&&l| !(l > 0.5 && l <= 1.0)) {
        return Err(Error::invalid(format!(
            "λ candidate {bad} is outside (0.5, 1]"
        )));
    }
    let vx = val.features();
    let labels = val.labels();
    let runs: Vec<(CandidateOutcome, LayeredClassifier)> = candidates
        .par_iter()
        .map(|&lambda| {
            let model = distill_with_targets(snapshot, source, lambda, x, y, cfg)?;
            let probs = model.predict(&vx)?;
            let outcome = CandidateOutcome {
                lambda,
                val_acc: gold_accuracy(&probs, &labels),
                gt_prob_incorrect: gt_prob_incorrect(&probs, &labels),
            };
            Ok((outcome, model))
        })
        .collect::<Result<_>>()?;
    let table: Vec<CandidateOutcome> = runs.iter().map(|(c, _)| c.clone()).collect();
    let choice = choose_lambda(&table, original_acc, tau)?;
    let model = runs
        .into_iter()
        .find(|(c, _)| c.lambda == choice.lambda)
        .map(|(_, m)| m)
        .expect("chosen λ comes from the table");
    Ok(Tuned {
        config: KdConfig {
            candidates: candidates.to_vec(),
            selected: choice.lambda,
            source_layer: source,
            fallback: choice.fallback,
        },
        model,
        table,
    })
}
