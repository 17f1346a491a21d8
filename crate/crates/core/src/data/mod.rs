//! Samples, datasets, the synthetic generator and JSONL ingestion.

mod jsonl;
mod synth;

use serde::{Deserialize, Serialize};

pub use jsonl::{load_jsonl, save_jsonl};
pub use synth::{generate, Bundle, PosteriorOracle, SynthSpec};

use crate::error::{Error, Result};
use crate::netcore::Matrix;

/// Tolerance on the total mass of an opinion distribution.
pub const OPINION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub gold_label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion_dist: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

impl Dataset {
    /// Validates shapes and labels before building the dataset.
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        let ds = Self {
            samples,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for s in &self.samples {
            if s.features.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {} has {} features, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if s.gold_label >= self.num_classes {
                return Err(Error::invalid(format!(
                    "sample {} has gold label {} but there are {} classes",
                    s.id, s.gold_label, self.num_classes
                )));
            }
            if let Some(p) = &s.opinion_dist {
                check_opinion(&s.id, p, self.num_classes)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn features(&self) -> Matrix {
        let data = self
            .samples
            .iter()
            .flat_map(|s| s.features.iter().copied())
            .collect();
        Matrix::from_vec(self.len(), self.dim(), data).expect("validated dataset")
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.gold_label).collect()
    }

    pub fn one_hot(&self) -> Matrix {
        let mut m = Matrix::zeros(self.len(), self.num_classes);
        for (i, s) in self.samples.iter().enumerate() {
            m.set(i, s.gold_label, 1.0);
        }
        m
    }

    pub fn has_opinions(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.opinion_dist.is_some())
    }

    /// Opinion distributions as rows; fails if any sample lacks one.
    pub fn opinions(&self) -> Result<Matrix> {
        let mut m = Matrix::zeros(self.len(), self.num_classes);
        for (i, s) in self.samples.iter().enumerate() {
            let p = s.opinion_dist.as_ref().ok_or_else(|| {
                Error::MissingDistributions(format!("sample {} has no opinion_dist", s.id))
            })?;
            m.row_mut(i).copy_from_slice(p);
        }
        Ok(m)
    }

    /// Majority label per sample: argmax of the opinion distribution (lowest
    /// index on ties), falling back to the gold label.
    pub fn majority_labels(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| s.opinion_dist.as_deref().map_or(s.gold_label, argmax))
            .collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_opinion(id: &str, p: &[f64], num_classes: usize) -> Result<()> {
    if p.len() != num_classes {
        return Err(Error::invalid(format!(
            "sample {id}: opinion_dist has {} entries, expected {num_classes}",
            p.len()
        )));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > OPINION_TOL {
        return Err(Error::invalid(format!(
            "sample {id}: opinion_dist is not a distribution (sum {sum})"
        )));
    }
    Ok(())
}
