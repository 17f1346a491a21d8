use std::path::{Path, PathBuf};

use ambicomp::baselines::SmoothingSpec;
use ambicomp::data::SynthSpec;
use ambicomp::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variables starting with this prefix override config fields.
/// `AMBICOMP__pipeline__train__epochs=5` sets `pipeline.train.epochs`; values
/// are parsed as JSON and fall back to plain strings.
pub const ENV_PREFIX: &str = "AMBICOMP__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generate a bundle per seed; the spec's own seed is replaced.
    Synthetic(SynthSpec),
    /// Fixed JSONL splits shared by every seed.
    Files {
        train: PathBuf,
        val: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineToggles {
    pub chance: bool,
    pub label_smoothing: bool,
    pub mc_dropout: bool,
    pub temperature: bool,
    pub ldl: bool,
    pub ls_ours: bool,
}

impl Default for BaselineToggles {
    fn default() -> Self {
        Self {
            chance: true,
            label_smoothing: true,
            mc_dropout: true,
            temperature: true,
            ldl: true,
            ls_ours: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub passes: usize,
    pub rate: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            passes: 10,
            rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySettings {
    pub batch: usize,
    pub repeats: usize,
}

impl Default for LatencySettings {
    fn default() -> Self {
        Self {
            batch: 256,
            repeats: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub pipeline: PipelineConfig,
    pub baselines: BaselineToggles,
    pub smoothing: SmoothingSpec,
    pub mc: McSettings,
    pub latency: LatencySettings,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SynthSpec::default()),
            pipeline: PipelineConfig::default(),
            baselines: BaselineToggles::default(),
            smoothing: SmoothingSpec::default(),
            mc: McSettings::default(),
            latency: LatencySettings::default(),
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("runs/default"),
            save_checkpoints: true,
        }
    }
}

fn field_err(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Reads a JSON config (or the defaults when `path` is `None`) and
    /// applies environment overrides from `env`.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    field_err("--config", format!("cannot read {}: {e}", p.display()))
                })?;
                serde_json::from_str::<Value>(&text).map_err(|e| {
                    field_err(
                        "--config",
                        format!("{} is not valid JSON: {e}", p.display()),
                    )
                })?
            }
            None => serde_json::to_value(Self::default()).expect("defaults serialize"),
        };
        apply_env(&mut value, env)?;
        let cfg: Self =
            serde_json::from_value(value).map_err(|e| field_err("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field-level checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(field_err("seeds", "at least one seed is required"));
        }
        let p = &self.pipeline;
        p.architecture
            .validate()
            .map_err(|e| field_err("pipeline.architecture", e.to_string()))?;
        p.train
            .validate()
            .map_err(|e| field_err("pipeline.train", e.to_string()))?;
        if p.train.epochs == 0 {
            return Err(field_err("pipeline.train.epochs", "must be at least 1"));
        }
        if !(p.tau.is_finite() && p.tau >= 0.0) {
            return Err(field_err(
                "pipeline.tau",
                format!("must be a non-negative number, got {}", p.tau),
            ));
        }
        if p.lambdas.is_empty() {
            return Err(field_err(
                "pipeline.lambdas",
                "needs at least one candidate",
            ));
        }
        if let Some(bad) = p.lambdas.iter().find(|&&l| !(l > 0.5 && l <= 1.0)) {
            return Err(field_err(
                "pipeline.lambdas",
                format!("{bad} is outside (0.5, 1]"),
            ));
        }
        if !(0.0..1.0).contains(&self.smoothing.alpha) {
            return Err(field_err("smoothing.alpha", "must lie in [0, 1)"));
        }
        if self.mc.passes == 0 {
            return Err(field_err("mc.passes", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.mc.rate) {
            return Err(field_err("mc.rate", "must lie in [0, 1)"));
        }
        if self.latency.repeats < 10 || self.latency.batch == 0 {
            return Err(field_err("latency", "needs repeats >= 10 and batch >= 1"));
        }
        match &self.data {
            DataSource::Synthetic(spec) => {
                spec.validate()
                    .map_err(|e| field_err("data.synthetic", e.to_string()))?;
                if spec.dim != p.architecture.input_dim {
                    return Err(field_err(
                        "pipeline.architecture.input_dim",
                        format!(
                            "is {} but the synthetic data has dim {}",
                            p.architecture.input_dim, spec.dim
                        ),
                    ));
                }
                if spec.num_classes != p.architecture.num_classes {
                    return Err(field_err(
                        "pipeline.architecture.num_classes",
                        format!(
                            "is {} but the synthetic data has {} classes",
                            p.architecture.num_classes, spec.num_classes
                        ),
                    ));
                }
            }
            DataSource::Files { train, val, test } => {
                for (name, path) in [
                    ("data.files.train", train),
                    ("data.files.val", val),
                    ("data.files.test", test),
                ] {
                    if !path.is_file() {
                        return Err(field_err(
                            name,
                            format!("{} does not exist", path.display()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, seeds and output location
    /// excluded so that a run is identified by what it computes per seed.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Collects `ENV_PREFIX` variables from the process environment.
pub fn env_overrides() -> Vec<(String, String)> {
    std::env::vars()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect()
}

fn apply_env(
    value: &mut Value,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(field_err(&key, "empty path segment"));
        }
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut slot = &mut *value;
        for (i, seg) in path.iter().enumerate() {
            let Value::Object(map) = slot else {
                return Err(field_err(
                    &key,
                    format!("`{}` is not an object", path[..i].join(".")),
                ));
            };
            slot = map.entry(seg.clone()).or_insert(Value::Null);
        }
        *slot = parsed;
    }
    Ok(())
}

/// Parses `0,1,2` or `0..3`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || {
        field_err(
            "--seed",
            format!("expected a list like `0,1,2` or a range `0..3`, got `{text}`"),
        )
    };
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}
