#![allow(dead_code)]

use std::path::Path;

use ambicomp::data::SynthSpec;
use ambicomp::model::Architecture;
use ambicomp_cli::config::{DataSource, ExperimentConfig, LatencySettings, McSettings};

/// A few-second experiment: 3 classes, 4 narrow blocks, 2 seeds.
pub fn small_config(out: &Path) -> ExperimentConfig {
    let mut spec = SynthSpec::corners(3, 8, 1.25, 1.5, 1.0);
    spec.n_train = 240;
    spec.n_val = 90;
    spec.n_test = 120;
    let mut cfg = ExperimentConfig {
        data: DataSource::Synthetic(spec),
        seeds: vec![0, 1],
        output_dir: out.to_path_buf(),
        mc: McSettings {
            passes: 3,
            rate: 0.1,
        },
        latency: LatencySettings {
            batch: 16,
            repeats: 10,
        },
        ..ExperimentConfig::default()
    };
    cfg.pipeline.architecture = Architecture {
        input_dim: 8,
        width: 12,
        depth: 4,
        num_classes: 3,
        ..Architecture::default()
    };
    cfg.pipeline.train.epochs = 4;
    cfg
}

pub fn write_config(cfg: &ExperimentConfig, path: &Path) {
    std::fs::write(path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}
