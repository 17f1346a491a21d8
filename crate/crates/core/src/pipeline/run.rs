use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::kd::{tune_lambda, KdConfig, Tuned};
use super::rules::{
    select_source_layer, select_target_layer, CandidateOutcome, ProbeReport, PruneDecision,
};
use super::train::TrainConfig;
use super::{probe_report, train_probes, train_standard, DEFAULT_LAMBDAS, DEFAULT_TAU};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, LayeredClassifier};
use crate::netcore::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub tau: f64,
    pub lambdas: Vec<f64>,
    /// Also distill on the unpruned network (the "+KD" ablation row).
    pub kd_only_variant: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            train: TrainConfig::default(),
            tau: DEFAULT_TAU,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            kd_only_variant: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.train.validate()?;
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::invalid(format!(
                "τ must be a non-negative number, got {}",
                self.tau
            )));
        }
        if self.lambdas.is_empty() {
            return Err(Error::invalid("λ candidate list is empty"));
        }
        if let Some(bad) = self.lambdas.iter().find(|&&l| !(l > 0.5 && l <= 1.0)) {
            return Err(Error::invalid(format!(
                "λ candidate {bad} is outside (0.5, 1]"
            )));
        }
        Ok(())
    }
}

/// The four ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "STD")]
    Std,
    #[serde(rename = "STD+Pruning")]
    Pruning,
    #[serde(rename = "STD+KD")]
    Kd,
    #[serde(rename = "STD+All")]
    All,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Std, Variant::Pruning, Variant::Kd, Variant::All];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Std => "STD",
            Variant::Pruning => "STD+Pruning",
            Variant::Kd => "STD+KD",
            Variant::All => "STD+All",
        }
    }
}

/// Probe training, pruning and tuned distillation applied to one trained
/// model.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub report: ProbeReport,
    pub decision: PruneDecision,
    pub pruned: LayeredClassifier,
    pub kd: Option<Tuned>,
    /// Set when distillation could not run.
    pub kd_skipped: Option<String>,
    /// The trained model with its frozen probes, kept for the "+KD" row.
    pub probed: LayeredClassifier,
}

/// Trains probes on `base`, prunes at the target layer and distills the
/// source probe into the pruned model. `kd_labels` play the role of `y` in
/// the distillation loss (one-hot, or smoothed for the LS variant).
pub fn compress(
    base: &LayeredClassifier,
    train: &Dataset,
    kd_labels: &Matrix,
    val: &Dataset,
    cfg: &PipelineConfig,
) -> Result<Compressed> {
    let mut probed = base.clone();
    train_probes(&mut probed, train, &cfg.train, true)?;
    let report = probe_report(&probed, val)?;
    let decision = select_target_layer(&report, cfg.tau);
    let target = decision.target_layer;
    let mut pruned = probed.prune_above(target)?;
    pruned.unfreeze_all();

    let (kd, kd_skipped) = if target >= 2 {
        let source = select_source_layer(&report, target)?;
        let snapshot = probed.prune_with_probes(target, &[source])?;
        let tuned = tune_lambda(
            &snapshot,
            source,
            &cfg.lambdas,
            &train.features(),
            kd_labels,
            val,
            report.original_acc,
            cfg.tau,
            &cfg.train,
        )?;
        (Some(tuned), None)
    } else {
        (
            None,
            Some("target layer 1 leaves no layer below it to distill from".to_string()),
        )
    };
    Ok(Compressed {
        report,
        decision,
        pruned,
        kd,
        kd_skipped,
        probed,
    })
}

/// Distillation on the unpruned network: the source is chosen below the top
/// layer and the original head is kept.
fn kd_unpruned(
    compressed: &Compressed,
    train: &Dataset,
    kd_labels: &Matrix,
    val: &Dataset,
    cfg: &PipelineConfig,
) -> Result<Option<Tuned>> {
    let n = compressed.probed.depth();
    if n < 2 {
        return Ok(None);
    }
    let source = select_source_layer(&compressed.report, n)?;
    let snapshot = compressed.probed.prune_with_probes(n, &[source])?;
    tune_lambda(
        &snapshot,
        source,
        &cfg.lambdas,
        &train.features(),
        kd_labels,
        val,
        compressed.report.original_acc,
        cfg.tau,
        &cfg.train,
    )
    .map(Some)
}

/// Serializable record of every decision the pipeline made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub std_train_loss: Vec<f64>,
    pub probe_report: ProbeReport,
    pub decision: PruneDecision,
    pub kd: Option<KdConfig>,
    pub kd_table: Vec<CandidateOutcome>,
    pub kd_skipped: Option<String>,
    pub kd_only: Option<KdConfig>,
    pub kd_only_table: Vec<CandidateOutcome>,
    pub original_params: usize,
    pub pruned_params: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub std: LayeredClassifier,
    pub pruned: LayeredClassifier,
    pub distilled: Option<LayeredClassifier>,
    pub kd_only: Option<LayeredClassifier>,
    pub report: PipelineReport,
    /// Wall-clock seconds per stage; excluded from the report so that reruns
    /// serialize identically.
    pub timings: Vec<(String, f64)>,
}

impl PipelineResult {
    /// Model for an ablation row. Rows whose distillation was skipped fall
    /// back to the model they would have started from.
    pub fn variant(&self, v: Variant) -> &LayeredClassifier {
        match v {
            Variant::Std => &self.std,
            Variant::Pruning => &self.pruned,
            Variant::Kd => self.kd_only.as_ref().unwrap_or(&self.std),
            Variant::All => self.distilled.as_ref().unwrap_or(&self.pruned),
        }
    }
}

/// Standard training followed by [`compress`], plus the unpruned
/// distillation row when enabled.
pub fn run_full_pipeline(
    train: &Dataset,
    val: &Dataset,
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let mut std = LayeredClassifier::new(cfg.architecture.clone(), cfg.train.seed)?;
    let log = train_standard(&mut std, train, &cfg.train)?;
    lap("train_standard", &mut timings);

    let one_hot = train.one_hot();
    let compressed = compress(&std, train, &one_hot, val, cfg)?;
    lap("probes_prune_distill", &mut timings);

    let kd_only = if cfg.kd_only_variant {
        kd_unpruned(&compressed, train, &one_hot, val, cfg)?
    } else {
        None
    };
    lap("distill_unpruned", &mut timings);

    let report = PipelineReport {
        std_train_loss: log.epoch_loss,
        probe_report: compressed.report.clone(),
        decision: compressed.decision,
        kd: compressed.kd.as_ref().map(|t| t.config.clone()),
        kd_table: compressed
            .kd
            .as_ref()
            .map(|t| t.table.clone())
            .unwrap_or_default(),
        kd_skipped: compressed.kd_skipped.clone(),
        kd_only: kd_only.as_ref().map(|t| t.config.clone()),
        kd_only_table: kd_only
            .as_ref()
            .map(|t| t.table.clone())
            .unwrap_or_default(),
        original_params: std.param_count(),
        pruned_params: compressed.pruned.param_count(),
    };
    Ok(PipelineResult {
        std,
        pruned: compressed.pruned,
        distilled: compressed.kd.map(|t| t.model),
        kd_only: kd_only.map(|t| t.model),
        report,
        timings,
    })
}
