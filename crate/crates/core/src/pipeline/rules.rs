use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validation accuracy and mean entropy per layer. Index `i` holds layer
/// `i + 1`; the last entry is the model's own head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub original_acc: f64,
}

impl ProbeReport {
    pub fn depth(&self) -> usize {
        self.accuracy.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub tau: f64,
    pub target_layer: usize,
}

/// Lowest layer whose accuracy is strictly above `original_acc − tau`.
/// Falls back to the top layer, which keeps the model whole.
pub fn select_target_layer(report: &ProbeReport, tau: f64) -> PruneDecision {
    let bar = report.original_acc - tau;
    let target_layer = report
        .accuracy
        .iter()
        .position(|&a| a > bar)
        .map_or(report.depth(), |i| i + 1);
    PruneDecision { tau, target_layer }
}

/// Layer just before the largest consecutive entropy drop among layers
/// `1..=target`; ties go to the lowest layer.
pub fn select_source_layer(report: &ProbeReport, target: usize) -> Result<usize> {
    if target < 2 || target > report.entropy.len() {
        return Err(Error::InvalidLayer {
            index: target,
            reason: "a source layer needs a target in 2..=depth".into(),
        });
    }
    let h = &report.entropy[..target];
    let mut best = 1;
    let mut best_drop = f64::NEG_INFINITY;
    for i in 0..target - 1 {
        let drop = h[i] - h[i + 1];
        if drop > best_drop {
            best_drop = drop;
            best = i + 1;
        }
    }
    Ok(best)
}

/// Validation outcome of distilling with one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub lambda: f64,
    pub val_acc: f64,
    /// Mean gold-label probability on misclassified samples; `None` when
    /// nothing was misclassified.
    pub gt_prob_incorrect: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    /// No candidate kept accuracy above the bar; the most accurate one won.
    pub fallback: bool,
}

/// Picks λ: among candidates with `val_acc > original_acc − tau`, the one
/// with the highest gold-label probability on its mistakes (larger λ on
/// ties, undefined values rank last). Without survivors, the highest
/// validation accuracy wins and the choice is flagged.
pub fn choose_lambda(
    table: &[CandidateOutcome],
    original_acc: f64,
    tau: f64,
) -> Result<LambdaChoice> {
    if table.is_empty() {
        return Err(Error::invalid("no λ candidates to choose from"));
    }
    let bar = original_acc - tau;
    let key = |c: &CandidateOutcome| c.gt_prob_incorrect.unwrap_or(f64::NEG_INFINITY);
    let better =
        |a: &CandidateOutcome, b: &CandidateOutcome, score: &dyn Fn(&CandidateOutcome) -> f64| {
            let (sa, sb) = (score(a), score(b));
            sa > sb || (sa == sb && a.lambda > b.lambda)
        };
    let pick = |cands: Vec<&CandidateOutcome>, score: &dyn Fn(&CandidateOutcome) -> f64| {
        cands
            .into_iter()
            .reduce(|best, c| if better(c, best, score) { c } else { best })
            .expect("non-empty")
            .lambda
    };
    let survivors: Vec<_> = table.iter().filter(|c| c.val_acc > bar).collect();
    if survivors.is_empty() {
        Ok(LambdaChoice {
            lambda: pick(table.iter().collect(), &|c| c.val_acc),
            fallback: true,
        })
    } else {
        Ok(LambdaChoice {
            lambda: pick(survivors, &key),
            fallback: false,
        })
    }
}

/// Mean probability assigned to the gold label over rows whose argmax
/// misses it.
pub fn gt_prob_incorrect(probs: &crate::netcore::Matrix, labels: &[usize]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, &y) in probs.iter_rows().zip(labels) {
        if crate::data::argmax(row) != y {
            total += row[y];
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}
