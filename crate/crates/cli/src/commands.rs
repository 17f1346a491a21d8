use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ambicomp::data::{generate, load_jsonl, save_jsonl};
use ambicomp::metrics::{evaluate, latency_probe, EvalReport, LatencyStats};
use ambicomp::model::{load_checkpoint, save_checkpoint};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, LatencySettings};
use crate::error::CliError;
use crate::experiment::{aggregate, run_seed, RunManifest, RunMetrics};
use crate::report;

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.json";
pub const REPORT: &str = "report.md";

/// Output directory written under a sibling staging name and moved into
/// place only when complete.
struct Staged {
    target: PathBuf,
    staging: PathBuf,
}

impl Staged {
    fn new(target: &Path, force: bool) -> Result<Self, CliError> {
        let occupied = target.exists()
            && fs::read_dir(target)
                .map_err(CliError::io(target))?
                .next()
                .is_some();
        if occupied && !force {
            return Err(CliError::OutputExists(target.to_path_buf()));
        }
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let staging = target.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(CliError::io(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(CliError::io(&staging))?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
        })
    }

    fn path(&self, rel: impl AsRef<Path>) -> Result<PathBuf, CliError> {
        let p = self.staging.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        Ok(p)
    }

    fn commit(self) -> Result<PathBuf, CliError> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(CliError::io(&self.target))?;
        }
        fs::rename(&self.staging, &self.target).map_err(CliError::io(&self.target))?;
        Ok(self.target)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn slug(name: &str) -> String {
    name.to_lowercase().replace('+', "_")
}

/// Writes `seed<s>/{train,val,test}.jsonl` for every configured seed.
pub fn cmd_synth(cfg: &ExperimentConfig, force: bool) -> Result<Vec<PathBuf>, CliError> {
    let DataSource::Synthetic(spec) = &cfg.data else {
        return Err(CliError::Config {
            field: "data".into(),
            message: "synth needs a synthetic data source".into(),
        });
    };
    let staged = Staged::new(&cfg.output_dir, force)?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let mut spec = spec.clone();
        spec.seed = seed;
        let bundle = generate(&spec)?;
        for (name, ds) in [
            ("train", &bundle.train),
            ("val", &bundle.val),
            ("test", &bundle.test),
        ] {
            let rel = PathBuf::from(format!("seed{seed}")).join(format!("{name}.jsonl"));
            save_jsonl(ds, &staged.path(&rel)?)?;
            written.push(rel);
        }
    }
    write_json(&staged.path("config.json")?, cfg)?;
    let root = staged.commit()?;
    Ok(written.into_iter().map(|r| root.join(r)).collect())
}

/// Full pipeline plus baselines for every seed. Writes the manifest, the
/// timing-free metrics file, a markdown report and (optionally) one
/// checkpoint per trained model.
pub fn cmd_run(cfg: &ExperimentConfig, force: bool) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let staged = Staged::new(&cfg.output_dir, force)?;
    let config_hash = cfg.hash();
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for &seed in &cfg.seeds {
        eprintln!("[seed {seed}] running pipeline and baselines");
        let outcome = run_seed(cfg, seed)?;
        if cfg.save_checkpoints {
            for (name, model) in &outcome.models {
                let rel = PathBuf::from("checkpoints")
                    .join(format!("seed{seed}"))
                    .join(format!("{}.ckpt", slug(name)));
                save_checkpoint(&staged.path(rel)?, model, &config_hash)?;
            }
        }
        records.push(outcome.record);
        timings.push(outcome.timings);
    }
    let metrics = RunMetrics {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        aggregate: aggregate(&records),
        seeds: records,
    };
    let manifest = RunManifest {
        config: cfg.clone(),
        metrics,
        timings,
    };
    write_json(&staged.path(MANIFEST)?, &manifest)?;
    write_json(&staged.path(METRICS)?, &manifest.metrics)?;
    write_json(&staged.path("config.json")?, cfg)?;
    fs::write(staged.path(REPORT)?, report::render(&manifest)).map_err(CliError::io(REPORT))?;
    staged.commit()?;
    Ok(manifest)
}

/// Scores a checkpoint on a JSONL dataset.
pub fn cmd_eval(checkpoint: &Path, data: &Path) -> Result<EvalReport, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let ds = load_jsonl(data)?;
    let mut report = evaluate(&ckpt.model.predict(&ds.features())?, &ds)?;
    report.param_count = Some(ckpt.model.param_count());
    Ok(report)
}

/// Renders the markdown tables of a run directory and stores them next to
/// the manifest.
pub fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::Missing(format!(
            "{} has no {MANIFEST}",
            dir.display()
        )));
    }
    let manifest: RunManifest = read_json(&path)?;
    let text = report::render(&manifest);
    let out = dir.join(REPORT);
    fs::write(&out, &text).map_err(CliError::io(out))?;
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub path: PathBuf,
    pub depth: usize,
    pub param_count: usize,
    pub block_params: Vec<usize>,
    pub head_params: usize,
    /// Per block: parameters this model lacks relative to the first entry.
    pub block_deltas: Vec<usize>,
    pub latency: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn markdown(&self) -> String {
        let mut out = String::from(
            "| Checkpoint | Blocks | Params | Removed vs first | Latency (ms) |\n|---|---|---|---|---|\n",
        );
        let base = self.entries.first().map_or(0, |e| e.param_count);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.3} ± {:.3} |",
                e.path.display(),
                e.depth,
                e.param_count,
                base as i64 - e.param_count as i64,
                e.latency.mean,
                e.latency.stddev
            );
        }
        out
    }
}

/// Parameter accounting and latency of each checkpoint, compared with the
/// first one. Latencies are only comparable within one invocation.
pub fn cmd_bench(paths: &[PathBuf], settings: LatencySettings) -> Result<BenchReport, CliError> {
    if paths.is_empty() {
        return Err(CliError::Config {
            field: "checkpoints".into(),
            message: "bench needs at least one checkpoint".into(),
        });
    }
    let mut entries: Vec<BenchEntry> = Vec::new();
    for path in paths {
        let model = load_checkpoint(path)?.model;
        let arch = model.architecture();
        let block_params: Vec<usize> = (1..=arch.depth).map(|i| arch.block_params(i)).collect();
        let block_deltas = match entries.first() {
            Some(first) => first
                .block_params
                .iter()
                .enumerate()
                .map(|(i, &p)| p.saturating_sub(block_params.get(i).copied().unwrap_or(0)))
                .collect(),
            None => vec![0; block_params.len()],
        };
        entries.push(BenchEntry {
            path: path.clone(),
            depth: arch.depth,
            param_count: model.param_count(),
            head_params: arch.head_params(),
            block_params,
            block_deltas,
            latency: latency_probe(&model, settings.batch, settings.repeats)?,
        });
    }
    Ok(BenchReport { entries })
}
