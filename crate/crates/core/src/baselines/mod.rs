//! Comparison methods: label smoothing, MC dropout, temperature scaling,
//! label-distribution learning and the uniform chance predictor.
//!
//! Temperature scaling and label-distribution learning consume opinion
//! distributions during training or fitting; the others see gold labels
//! only.

use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::LayeredClassifier;
use crate::netcore::{softmax_rows, Matrix, Mode};
use crate::pipeline::{train_on_targets, TrainConfig, TrainLog};

pub const DEFAULT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    pub alpha: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_SMOOTHING,
        }
    }
}

/// `(1 − α)·target + α/C`, row by row.
pub fn smooth_targets(targets: &Matrix, alpha: f64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "smoothing α must lie in [0, 1), got {alpha}"
        )));
    }
    let uniform = alpha / targets.cols() as f64;
    Ok(targets.map(|t| (1.0 - alpha) * t + uniform))
}

pub fn train_label_smoothing(
    model: &mut LayeredClassifier,
    train: &Dataset,
    spec: SmoothingSpec,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let targets = smooth_targets(&train.one_hot(), spec.alpha)?;
    train_on_targets(model, train, &targets, cfg)
}

/// Soft-target cross-entropy against the training set's opinion
/// distributions.
pub fn train_ldl(
    model: &mut LayeredClassifier,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let targets = train.opinions().map_err(|_| {
        Error::MissingDistributions("label-distribution learning trains on opinion_dist".into())
    })?;
    train_on_targets(model, train, &targets, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub passes: usize,
    pub rate: f64,
    pub seed: u64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            passes: 10,
            rate: 0.1,
            seed: 0,
        }
    }
}

/// Mean of `passes` softmax outputs with dropout active in every block.
/// The model itself is untouched; a copy carries the dropout stream.
pub fn mc_dropout_predict(model: &LayeredClassifier, x: &Matrix, spec: McSpec) -> Result<Matrix> {
    if spec.passes == 0 {
        return Err(Error::invalid("MC dropout needs at least one pass"));
    }
    let mut m = model.clone();
    m.detach_probes();
    m.unfreeze_all();
    m.set_dropout_rate(spec.rate)?;
    m.reseed_dropout(spec.seed);
    let mut sum = Matrix::zeros(x.rows(), m.num_classes());
    for _ in 0..spec.passes {
        let out = m.forward_all(x, Mode::Train)?;
        for (s, p) in sum.as_mut_slice().iter_mut().zip(out.head_probs.as_slice()) {
            *s += p;
        }
    }
    let k = spec.passes as f64;
    Ok(sum.map(|v| v / k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSpec {
    pub temperature: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_size: usize,
}

impl Default for TemperatureSpec {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            grid_min: 0.25,
            grid_max: 4.0,
            grid_size: 50,
        }
    }
}

impl TemperatureSpec {
    /// Log-spaced candidate temperatures, both bounds included.
    pub fn grid(&self) -> Vec<f64> {
        if self.grid_size == 1 {
            return vec![self.grid_min];
        }
        let ratio = (self.grid_max / self.grid_min).ln();
        (0..self.grid_size)
            .map(|i| self.grid_min * (ratio * i as f64 / (self.grid_size - 1) as f64).exp())
            .collect()
    }

    pub fn apply(&self, logits: &Matrix) -> Result<Matrix> {
        apply_temperature(logits, self.temperature)
    }
}

pub fn apply_temperature(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    softmax_rows(&logits.scale(1.0 / temperature))
}

/// Grid search for the temperature minimizing mean `KL(opinion ‖ softmax(logits / T))`
/// on a distribution-labeled set; the lowest T wins ties.
pub fn fit_temperature(logits: &Matrix, val: &Dataset) -> Result<TemperatureSpec> {
    let opinions = val.opinions().map_err(|_| {
        Error::MissingDistributions(
            "temperature scaling is fitted on opinion_dist of the validation set".into(),
        )
    })?;
    fit_temperature_to(logits, &opinions, TemperatureSpec::default())
}

pub fn fit_temperature_to(
    logits: &Matrix,
    targets: &Matrix,
    spec: TemperatureSpec,
) -> Result<TemperatureSpec> {
    if logits.shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "temperature fit",
            left: logits.shape(),
            right: targets.shape(),
        });
    }
    if spec.grid_size == 0 || !(spec.grid_min > 0.0 && spec.grid_max >= spec.grid_min) {
        return Err(Error::invalid(
            "temperature grid needs 0 < min <= max and at least one point",
        ));
    }
    let mut best = (f64::INFINITY, spec.grid_min);
    for t in spec.grid() {
        let probs = apply_temperature(logits, t)?;
        let mut total = 0.0;
        for (h, p) in targets.iter_rows().zip(probs.iter_rows()) {
            total += crate::metrics::kl(h, p)?;
        }
        let mean = total / logits.rows().max(1) as f64;
        if mean < best.0 {
            best = (mean, t);
        }
    }
    Ok(TemperatureSpec {
        temperature: best.1,
        ..spec
    })
}

/// The uniform predictor. Accuracy is the share of the most common
/// majority label; Diff treats that label as the prediction.
pub fn chance_eval(test: &Dataset) -> Result<EvalReport> {
    let opinions = test.opinions().map_err(|_| {
        Error::MissingDistributions("the chance baseline is scored against opinion_dist".into())
    })?;
    let c = test.num_classes;
    let uniform = Matrix::from_vec(test.len(), c, vec![1.0 / c as f64; test.len() * c])?;
    let mut report = evaluate(&uniform, test)?;
    let majority = test.majority_labels();
    let mut counts = vec![0usize; c];
    for &m in &majority {
        counts[m] += 1;
    }
    let top = argmax(&counts.iter().map(|&n| n as f64).collect::<Vec<_>>());
    report.acc = counts[top] as f64 / test.len().max(1) as f64;
    let misses: Vec<f64> = opinions
        .iter_rows()
        .zip(&majority)
        .filter(|(_, &m)| m != top)
        .map(|(h, &m)| h[m] - 1.0 / c as f64)
        .collect();
    report.diff = (!misses.is_empty()).then(|| misses.iter().sum::<f64>() / misses.len() as f64);
    Ok(report)
}
