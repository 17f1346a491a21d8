use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayeredClassifier;
use crate::netcore::Matrix;

const WARMUP_PASSES: usize = 3;
const PROBE_SEED: u64 = 0x1a7e;

/// Wall-clock statistics of repeated eval-mode forward passes, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    /// Sample standard deviation over `repeats` passes.
    pub stddev: f64,
    pub repeats: usize,
    pub batch: usize,
}

/// Times `repeats` forward passes over a fixed pseudo-random batch of
/// `input_size` rows, after a few untimed warm-up passes.
///
/// Runs on the calling thread only. Numbers from different hosts, or from a
/// loaded machine, are not comparable; compare models within one call site.
pub fn latency_probe(
    model: &LayeredClassifier,
    input_size: usize,
    repeats: usize,
) -> Result<LatencyStats> {
    if model.depth() == 0 {
        return Err(Error::invalid("latency probe needs at least one block"));
    }
    if repeats < 10 {
        return Err(Error::invalid(format!(
            "latency probe needs at least 10 repeats, got {repeats}"
        )));
    }
    if input_size == 0 {
        return Err(Error::invalid("latency probe needs a non-empty batch"));
    }
    let dim = model.architecture().input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let data: Vec<f64> = (0..input_size * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let x = Matrix::from_vec(input_size, dim, data)?;

    for _ in 0..WARMUP_PASSES {
        std::hint::black_box(model.predict(&x)?);
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(model.predict(&x)?);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = samples.iter().sum::<f64>() / repeats as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
    Ok(LatencyStats {
        mean,
        stddev: var.sqrt(),
        repeats,
        batch: input_size,
    })
}
