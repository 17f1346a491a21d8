//! Brute-force counterparts of the layer and λ selection rules, plus
//! generators that favour ties and values sitting exactly on the bar.
#![allow(dead_code)]

use ambicomp::pipeline::{CandidateOutcome, ProbeReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Accuracies and entropies drawn from a coarse grid, so equal values and
/// `acc == original − τ` both happen regularly.
pub fn random_report(rng: &mut ChaCha8Rng) -> (ProbeReport, f64) {
    let depth = rng.random_range(2..=10);
    let grid = |rng: &mut ChaCha8Rng, steps: u32| rng.random_range(0..=steps) as f64 / steps as f64;
    let accuracy: Vec<f64> = (0..depth).map(|_| grid(rng, 10)).collect();
    let entropy: Vec<f64> = (0..depth).map(|_| 1.5 * grid(rng, 6)).collect();
    let original_acc = *accuracy.last().unwrap();
    let tau = [0.0, 0.1, 0.2, 0.01][rng.random_range(0..4)];
    (
        ProbeReport {
            accuracy,
            entropy,
            original_acc,
        },
        tau,
    )
}

/// The layer `t` that passes while every layer below it fails; the top layer
/// when no such layer exists.
pub fn target_oracle(report: &ProbeReport, tau: f64) -> usize {
    let passes = |l: usize| report.accuracy[l - 1] > report.original_acc - tau;
    let n = report.depth();
    let hits: Vec<usize> = (1..=n)
        .filter(|&t| passes(t) && (1..t).all(|l| !passes(l)))
        .collect();
    assert!(hits.len() <= 1);
    hits.first().copied().unwrap_or(n)
}

/// Every `i` whose drop is at least every other drop; the smallest wins.
pub fn source_oracle(report: &ProbeReport, target: usize) -> usize {
    let h = &report.entropy;
    let drop = |i: usize| h[i - 1] - h[i];
    let range: Vec<usize> = (1..target).collect();
    *range
        .iter()
        .filter(|&&i| range.iter().all(|&j| drop(i) >= drop(j)))
        .min()
        .unwrap()
}

pub fn random_table(rng: &mut ChaCha8Rng) -> (Vec<CandidateOutcome>, f64, f64) {
    let table = [0.6, 0.7, 0.8, 0.9]
        .iter()
        .map(|&lambda| CandidateOutcome {
            lambda,
            val_acc: rng.random_range(0..=8) as f64 / 8.0,
            gt_prob_incorrect: (rng.random_range(0..5) > 0)
                .then(|| rng.random_range(0..=4) as f64 / 8.0),
        })
        .collect();
    let original = rng.random_range(0..=8) as f64 / 8.0;
    let tau = [0.0, 0.125, 0.01][rng.random_range(0..3)];
    (table, original, tau)
}

/// Returns `(λ, fallback)` by sorting candidates on the documented keys.
pub fn lambda_oracle(table: &[CandidateOutcome], original: f64, tau: f64) -> (f64, bool) {
    let mut survivors: Vec<&CandidateOutcome> = table
        .iter()
        .filter(|c| c.val_acc > original - tau)
        .collect();
    let fallback = survivors.is_empty();
    if fallback {
        survivors = table.iter().collect();
        survivors.sort_by(|a, b| {
            b.val_acc
                .total_cmp(&a.val_acc)
                .then(b.lambda.total_cmp(&a.lambda))
        });
    } else {
        // None sorts below every defined score
        survivors.sort_by(|a, b| {
            b.gt_prob_incorrect
                .partial_cmp(&a.gt_prob_incorrect)
                .unwrap()
                .then(b.lambda.total_cmp(&a.lambda))
        });
    }
    (survivors[0].lambda, fallback)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
