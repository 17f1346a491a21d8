use std::collections::BTreeMap;
use std::time::Instant;

use ambicomp::baselines::{
    chance_eval, fit_temperature, mc_dropout_predict, smooth_targets, train_label_smoothing,
    train_ldl, McSpec,
};
use ambicomp::data::{generate, load_jsonl, Dataset};
use ambicomp::metrics::{evaluate, latency_probe, EvalReport, LatencyStats};
use ambicomp::model::LayeredClassifier;
use ambicomp::netcore::Matrix;
use ambicomp::pipeline::{compress, run_full_pipeline, CandidateOutcome, ProbeReport, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::CliError;

pub const CHANCE: &str = "Chance";
pub const LS: &str = "LS";
pub const MC: &str = "MC";
pub const TS: &str = "TS";
pub const LDL: &str = "LDL";
pub const LS_OURS: &str = "LS+Ours";

/// Splits for one seed, plus distribution-labeled copies of train and val
/// for the baselines that need them.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub train_dist: Option<Dataset>,
    pub val_dist: Option<Dataset>,
}

pub fn load_seed_data(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData, CliError> {
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = seed;
            let bundle = generate(&spec)?;
            let train_dist =
                bundle.with_opinions(&bundle.train, spec.annotator_count, seed ^ 0x7472);
            let val_dist = bundle.with_opinions(&bundle.val, spec.annotator_count, seed ^ 0x76616c);
            Ok(SeedData {
                train: bundle.train,
                val: bundle.val,
                test: bundle.test,
                train_dist: Some(train_dist),
                val_dist: Some(val_dist),
            })
        }
        DataSource::Files { train, val, test } => {
            let train = load_jsonl(train)?;
            let val = load_jsonl(val)?;
            let test = load_jsonl(test)?;
            if !test.has_opinions() {
                return Err(CliError::Missing(
                    "the test split needs opinion_dist on every sample to score distributions"
                        .into(),
                ));
            }
            Ok(SeedData {
                train_dist: train.has_opinions().then(|| train.clone()),
                val_dist: val.has_opinions().then(|| val.clone()),
                train,
                val,
                test,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdDecision {
    pub source_layer: usize,
    pub lambda: f64,
    pub fallback: bool,
    pub table: Vec<CandidateOutcome>,
}

/// Every rule-driven choice of one seed, for post-hoc auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decisions {
    pub tau: f64,
    pub target_layer: usize,
    pub kd: Option<KdDecision>,
    pub kd_skipped: Option<String>,
    pub kd_unpruned: Option<KdDecision>,
    pub ls_target_layer: Option<usize>,
    pub ls_kd: Option<KdDecision>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    pub original_params: usize,
    pub pruned_params: usize,
    /// Pruned size predicted from the architecture descriptor alone.
    pub descriptor_pruned_params: usize,
    pub block_params: Vec<usize>,
    pub head_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: BTreeMap<String, EvalReport>,
    pub decisions: Decisions,
    pub probe_report: ProbeReport,
    pub compression: Compression,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTimings {
    pub seed: u64,
    pub stages: Vec<(String, f64)>,
    pub latency_original: LatencyStats,
    pub latency_pruned: LatencyStats,
}

pub struct SeedOutcome {
    pub record: SeedRecord,
    pub timings: SeedTimings,
    /// Trained models by method name, for checkpointing.
    pub models: Vec<(String, LayeredClassifier)>,
}

fn kd_decision(
    cfg: Option<&ambicomp::pipeline::KdConfig>,
    table: &[CandidateOutcome],
) -> Option<KdDecision> {
    cfg.map(|k| KdDecision {
        source_layer: k.source_layer,
        lambda: k.selected,
        fallback: k.fallback,
        table: table.to_vec(),
    })
}

fn scored(
    model: &LayeredClassifier,
    probs: &Matrix,
    test: &Dataset,
) -> Result<EvalReport, CliError> {
    let mut r = evaluate(probs, test)?;
    r.param_count = Some(model.param_count());
    Ok(r)
}

/// Runs the pipeline and every enabled baseline for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome, CliError> {
    let data = load_seed_data(cfg, seed)?;
    let mut pcfg = cfg.pipeline.clone();
    pcfg.train.seed = seed;
    let mut stages = Vec::new();
    let mut notes = Vec::new();
    let mut metrics = BTreeMap::new();
    let mut models = Vec::new();
    let x_test = data.test.features();
    let result = run_full_pipeline(&data.train, &data.val, &pcfg)?;
    stages.extend(result.timings.iter().cloned());
    for v in Variant::ALL {
        let m = result.variant(v);
        metrics.insert(
            v.name().to_string(),
            scored(m, &m.predict(&x_test)?, &data.test)?,
        );
        models.push((v.name().to_string(), m.clone()));
    }
    if result.distilled.is_none() {
        notes.push("STD+All equals STD+Pruning: distillation was skipped".into());
    }

    let mut clock = Instant::now();
    let mut lap = |name: &str, stages: &mut Vec<(String, f64)>| {
        stages.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let toggles = cfg.baselines;
    if toggles.chance {
        metrics.insert(CHANCE.into(), chance_eval(&data.test)?);
    }
    if toggles.mc_dropout {
        let spec = McSpec {
            passes: cfg.mc.passes,
            rate: cfg.mc.rate,
            seed,
        };
        let probs = mc_dropout_predict(&result.std, &x_test, spec)?;
        metrics.insert(MC.into(), scored(&result.std, &probs, &data.test)?);
        lap("mc_dropout", &mut stages);
    }
    let mut temperature = None;
    if toggles.temperature {
        match &data.val_dist {
            Some(val_dist) => {
                let t = fit_temperature(&result.std.logits(&val_dist.features())?, val_dist)?;
                let probs = t.apply(&result.std.logits(&x_test)?)?;
                metrics.insert(TS.into(), scored(&result.std, &probs, &data.test)?);
                temperature = Some(t.temperature);
            }
            None => notes.push("TS skipped: the validation split has no opinion_dist".into()),
        }
    }
    if toggles.ldl {
        match &data.train_dist {
            Some(train_dist) => {
                let mut m = LayeredClassifier::new(pcfg.architecture.clone(), seed)?;
                train_ldl(&mut m, train_dist, &pcfg.train)?;
                metrics.insert(LDL.into(), scored(&m, &m.predict(&x_test)?, &data.test)?);
                models.push((LDL.into(), m));
                lap("ldl", &mut stages);
            }
            None => notes.push("LDL skipped: the training split has no opinion_dist".into()),
        }
    }
    let (mut ls_target_layer, mut ls_kd) = (None, None);
    if toggles.label_smoothing || toggles.ls_ours {
        let mut ls = LayeredClassifier::new(pcfg.architecture.clone(), seed)?;
        train_label_smoothing(&mut ls, &data.train, cfg.smoothing, &pcfg.train)?;
        metrics.insert(LS.into(), scored(&ls, &ls.predict(&x_test)?, &data.test)?);
        lap("label_smoothing", &mut stages);
        if toggles.ls_ours {
            let smoothed = smooth_targets(&data.train.one_hot(), cfg.smoothing.alpha)?;
            let c = compress(&ls, &data.train, &smoothed, &data.val, &pcfg)?;
            ls_target_layer = Some(c.decision.target_layer);
            ls_kd = kd_decision(
                c.kd.as_ref().map(|t| &t.config),
                c.kd.as_ref().map_or(&[], |t| &t.table),
            );
            let m = c.kd.map(|t| t.model).unwrap_or(c.pruned);
            metrics.insert(
                LS_OURS.into(),
                scored(&m, &m.predict(&x_test)?, &data.test)?,
            );
            models.push((LS_OURS.into(), m));
            lap("ls_ours", &mut stages);
        }
        models.push((LS.into(), ls));
    }

    let latency_original = latency_probe(&result.std, cfg.latency.batch, cfg.latency.repeats)?;
    let latency_pruned = latency_probe(&result.pruned, cfg.latency.batch, cfg.latency.repeats)?;
    lap("latency", &mut stages);

    let arch = &pcfg.architecture;
    let target = result.report.decision.target_layer;
    let record = SeedRecord {
        seed,
        metrics,
        decisions: Decisions {
            tau: result.report.decision.tau,
            target_layer: target,
            kd: kd_decision(result.report.kd.as_ref(), &result.report.kd_table),
            kd_skipped: result.report.kd_skipped.clone(),
            kd_unpruned: kd_decision(result.report.kd_only.as_ref(), &result.report.kd_only_table),
            ls_target_layer,
            ls_kd,
            temperature,
        },
        probe_report: result.report.probe_report.clone(),
        compression: Compression {
            original_params: result.report.original_params,
            pruned_params: result.report.pruned_params,
            descriptor_pruned_params: arch.backbone_params(target),
            block_params: (1..=arch.depth).map(|i| arch.block_params(i)).collect(),
            head_params: arch.head_params(),
        },
        notes,
    };
    Ok(SeedOutcome {
        record,
        timings: SeedTimings {
            seed,
            stages,
            latency_original,
            latency_pruned,
        },
        models,
    })
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub jsd: Option<Stat>,
    pub kl: Option<Stat>,
    pub acc: Option<Stat>,
    pub diff: Option<Stat>,
    pub param_count: Option<usize>,
}

pub fn aggregate(records: &[SeedRecord]) -> BTreeMap<String, AggregateRow> {
    let mut methods: Vec<&String> = records.iter().flat_map(|r| r.metrics.keys()).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|m| {
            let reports: Vec<&EvalReport> =
                records.iter().filter_map(|r| r.metrics.get(m)).collect();
            let pick = |f: fn(&EvalReport) -> Option<f64>| {
                Stat::of(&reports.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let row = AggregateRow {
                jsd: pick(|r| r.jsd),
                kl: pick(|r| r.kl),
                acc: pick(|r| Some(r.acc)),
                diff: pick(|r| r.diff),
                param_count: reports.first().and_then(|r| r.param_count),
            };
            (m.clone(), row)
        })
        .collect()
}

/// Deterministic part of a run: identical for identical config and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<SeedRecord>,
    pub aggregate: BTreeMap<String, AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    #[serde(flatten)]
    pub metrics: RunMetrics,
    pub timings: Vec<SeedTimings>,
}
