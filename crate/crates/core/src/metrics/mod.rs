//! Distribution metrics and evaluation reports.
//!
//! `jsd` is the Jensen–Shannon *distance*: the square root of the base-2
//! Jensen–Shannon divergence, so it lies in `[0, 1]`. `kl` is
//! `KL(human ‖ model)` in nats. All logarithms clip their argument at
//! [`LOG_EPS`].

mod latency;

use serde::{Deserialize, Serialize};

pub use latency::{latency_probe, LatencyStats};

use crate::data::{argmax, Dataset};
use crate::error::{Error, Result};
use crate::netcore::{check_simplex, Matrix, LOG_EPS};

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            op: "distribution pair",
            left: (1, p.len()),
            right: (1, q.len()),
        });
    }
    check_simplex("first distribution", p)?;
    check_simplex("second distribution", q)
}

fn kl_base(p: &[f64], q: &[f64], log: impl Fn(f64) -> f64) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (log(a.max(LOG_EPS)) - log(b.max(LOG_EPS))))
        .sum()
}

/// Jensen–Shannon distance, base 2.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let div = 0.5 * (kl_base(p, &m, f64::log2) + kl_base(q, &m, f64::log2));
    Ok(div.clamp(0.0, 1.0).sqrt())
}

/// `KL(human ‖ model)` in nats.
pub fn kl(human: &[f64], model: &[f64]) -> Result<f64> {
    check_pair(human, model)?;
    Ok(kl_base(human, model, f64::ln).max(0.0))
}

/// Shannon entropy in nats with `0 · ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Mean row entropy.
pub fn mean_entropy(probs: &Matrix) -> f64 {
    if probs.rows() == 0 {
        return 0.0;
    }
    probs.iter_rows().map(entropy).sum::<f64>() / probs.rows() as f64
}

/// Fraction of rows whose argmax equals the dataset's majority label.
pub fn accuracy(predictions: &Matrix, data: &Dataset) -> Result<f64> {
    check_rows(predictions, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter_rows()
        .zip(data.majority_labels())
        .filter(|(p, y)| argmax(p) == *y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Mean of `human[majority] − predicted[majority]` over incorrectly predicted
/// samples; `None` when every prediction is correct.
pub fn diff_incorrect(predictions: &Matrix, data: &Dataset) -> Result<Option<f64>> {
    check_rows(predictions, data)?;
    let opinions = data.opinions()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (pred, human) in predictions.iter_rows().zip(opinions.iter_rows()) {
        let majority = argmax(human);
        if argmax(pred) != majority {
            total += human[majority] - pred[majority];
            count += 1;
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

fn check_rows(predictions: &Matrix, data: &Dataset) -> Result<()> {
    if predictions.rows() != data.len() || predictions.cols() != data.num_classes {
        return Err(Error::ShapeMismatch {
            op: "evaluation",
            left: predictions.shape(),
            right: (data.len(), data.num_classes),
        });
    }
    Ok(())
}

fn mean_over_rows(
    a: &Matrix,
    b: &Matrix,
    f: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in a.iter_rows().zip(b.iter_rows()) {
        total += f(x, y)?;
    }
    Ok(total / a.rows().max(1) as f64)
}

/// Metrics of one predictor on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub jsd: Option<f64>,
    pub kl: Option<f64>,
    pub acc: f64,
    pub diff: Option<f64>,
    pub mean_entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<LatencyStats>,
    /// Why distribution metrics are absent, when they are.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Evaluates predicted distributions against `data`. Distribution metrics
/// are omitted (with a reason) when the data carries no opinions.
pub fn evaluate(predictions: &Matrix, data: &Dataset) -> Result<EvalReport> {
    check_rows(predictions, data)?;
    let acc = accuracy(predictions, data)?;
    let mean_entropy = mean_entropy(predictions);
    if !data.has_opinions() {
        return Ok(EvalReport {
            jsd: None,
            kl: None,
            acc,
            diff: None,
            mean_entropy,
            param_count: None,
            latency_ms: None,
            reason: Some(
                "dataset carries no opinion_dist; JSD, KL and Diff need distribution labels".into(),
            ),
        });
    }
    let opinions = data.opinions()?;
    Ok(EvalReport {
        jsd: Some(mean_over_rows(predictions, &opinions, jsd)?),
        kl: Some(mean_over_rows(&opinions, predictions, kl)?),
        acc,
        diff: diff_incorrect(predictions, data)?,
        mean_entropy,
        param_count: None,
        latency_ms: None,
        reason: None,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::Sample;

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        // m = (0.75, 0.25); ((0.5·log2(2/3) + 0.5) + log2(4/3)) / 2, square-rooted
        let expected = ((0.5 * (2.0f64 / 3.0).log2() + 0.5 + (4.0f64 / 3.0).log2()) / 2.0).sqrt();
        assert!((jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.557923).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        // 0.6 ln 1.2 + 0.4 ln 0.8
        assert!((kl(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 0.020136).abs() < 1e-6);
        assert!((kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.25; 4]) - 1.386294).abs() < 1e-6);
        // −(0.57 ln 0.57 + 0.43 ln 0.43)
        assert!((entropy(&[0.57, 0.43, 0.0, 0.0, 0.0, 0.0]) - 0.683315).abs() < 1e-6);
    }

    #[test]
    fn non_simplex_rejected() {
        assert!(jsd(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl(&[0.5, 0.5], &[0.5, 0.5, 0.0]).is_err());
    }

    fn ds(rows: &[(usize, Option<[f64; 3]>)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, (g, op))| Sample {
                    id: i.to_string(),
                    features: vec![0.0],
                    gold_label: *g,
                    opinion_dist: op.map(|o| o.to_vec()),
                })
                .collect(),
            3,
        )
        .unwrap()
    }

    #[test]
    fn accuracy_counts_against_majority() {
        let data = ds(&[
            (0, Some([0.6, 0.3, 0.1])),
            (2, Some([0.2, 0.7, 0.1])),
            (1, None),
            (2, None),
            (0, Some([0.1, 0.1, 0.8])),
        ]);
        let preds = Matrix::from_rows(&[
            [0.5, 0.4, 0.1], // majority 0, hit
            [0.1, 0.8, 0.1], // majority 1, hit
            [0.6, 0.3, 0.1], // gold 1, miss
            [0.2, 0.2, 0.6], // gold 2, hit
            [0.5, 0.3, 0.2], // majority 2, miss
        ])
        .unwrap();
        assert!((accuracy(&preds, &data).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn diff_over_incorrect_samples() {
        let data = ds(&[
            (0, Some([0.6, 0.3, 0.1])),
            (1, Some([0.2, 0.7, 0.1])),
            (1, Some([0.1, 0.8, 0.1])),
        ]);
        // 0.6 vs 0.2, then 0.7 vs 0.5 (the tie resolves to class 0, a miss)
        let preds =
            Matrix::from_rows(&[[0.2, 0.7, 0.1], [0.5, 0.5, 0.0], [0.1, 0.8, 0.1]]).unwrap();
        let d = diff_incorrect(&preds, &data).unwrap().unwrap();
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn diff_is_signed() {
        let data = ds(&[(0, Some([0.4, 0.35, 0.25]))]);
        let preds = Matrix::from_rows(&[[0.45, 0.55, 0.0]]).unwrap();
        let d = diff_incorrect(&preds, &data).unwrap().unwrap();
        assert!((d + 0.05).abs() < 1e-12);
    }

    #[test]
    fn diff_undefined_when_all_correct() {
        let data = ds(&[(0, Some([0.6, 0.3, 0.1])), (1, Some([0.2, 0.7, 0.1]))]);
        let preds = data.opinions().unwrap();
        assert_eq!(diff_incorrect(&preds, &data).unwrap(), None);
    }

    #[test]
    fn evaluate_without_opinions_gives_reason() {
        let data = ds(&[(0, None), (1, None)]);
        let preds = Matrix::from_rows(&[[0.6, 0.3, 0.1], [0.6, 0.3, 0.1]]).unwrap();
        let r = evaluate(&preds, &data).unwrap();
        assert!(r.jsd.is_none() && r.kl.is_none());
        assert!(r.reason.is_some());
        assert_eq!(r.acc, 0.5);
    }

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn jsd_symmetric_and_bounded(
            (a, b) in (2usize..9).prop_flat_map(|c| (
                prop::collection::vec(0.0f64..1.0, c),
                prop::collection::vec(0.0f64..1.0, c),
            )).prop_filter("nonzero mass", |(a, b)| a.iter().sum::<f64>() > 1e-3 && b.iter().sum::<f64>() > 1e-3)
        ) {
            let p = simplex(a);
            let q = simplex(b);
            let d = jsd(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - jsd(&q, &p).unwrap()).abs() < 1e-12);
            prop_assert!(kl(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn jsd_triangle_inequality(
            (a, b, c) in (2usize..9).prop_flat_map(|n| (
                prop::collection::vec(0.001f64..1.0, n),
                prop::collection::vec(0.001f64..1.0, n),
                prop::collection::vec(0.001f64..1.0, n),
            ))
        ) {
            let (p, q, r) = (simplex(a), simplex(b), simplex(c));
            let pq = jsd(&p, &q).unwrap();
            let qr = jsd(&q, &r).unwrap();
            let pr = jsd(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-9);
        }

        #[test]
        fn mixing_two_coordinates_never_lowers_entropy(
            raw in prop::collection::vec(0.01f64..1.0, 3..8),
            t in 0.0f64..1.0,
        ) {
            let p = simplex(raw);
            let mut q = p.clone();
            q[0] = t * p[0] + (1.0 - t) * p[1];
            q[1] = (1.0 - t) * p[0] + t * p[1];
            prop_assert!(entropy(&q) >= entropy(&p) - 1e-12);
        }
    }
}
