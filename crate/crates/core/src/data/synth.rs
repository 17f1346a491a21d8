//! Gaussian-mixture generator with an exact Bayes posterior.
//!
//! Every class owns one component at `mean_c`, or two at `mean_c ± offset_c`
//! when mirror offsets are given. Components share the isotropic standard
//! deviation `sigma` and classes have a uniform prior, so
//!
//! `p(c | x) ∝ Σ_k exp(−‖x − m_ck‖² / 2σ²)`.
//!
//! The mirrored part of the signal is symmetric around `mean_c` and so cannot
//! be read out linearly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};

/// Scale of the linearly readable class offsets in the default spec.
pub const DEFAULT_LINEAR_SCALE: f64 = 1.25;
/// Scale of the mirrored class offsets in the default spec.
pub const DEFAULT_MIRROR_SCALE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub class_means: Vec<Vec<f64>>,
    /// Empty for a one-component-per-class mixture.
    #[serde(default)]
    pub mirror_offsets: Vec<Vec<f64>>,
    pub sigma: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    /// 0: test opinions are the exact posterior; k > 0: normalized histogram
    /// of k posterior draws.
    #[serde(default)]
    pub annotator_count: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::corners(4, 16, DEFAULT_LINEAR_SCALE, DEFAULT_MIRROR_SCALE, 1.0)
    }
}

impl SynthSpec {
    /// Class `c` sits at `linear · e_c`, mirrored by `± mirror · e_{C+c}`.
    /// Pass `mirror = 0` for a plain mixture.
    pub fn corners(num_classes: usize, dim: usize, linear: f64, mirror: f64, sigma: f64) -> Self {
        let axis = |i: usize, scale: f64| {
            let mut v = vec![0.0; dim];
            if i < dim {
                v[i] = scale;
            }
            v
        };
        let class_means = (0..num_classes).map(|c| axis(c, linear)).collect();
        let mirror_offsets = if mirror == 0.0 {
            Vec::new()
        } else {
            (0..num_classes)
                .map(|c| axis(num_classes + c, mirror))
                .collect()
        };
        Self {
            num_classes,
            dim,
            class_means,
            mirror_offsets,
            sigma,
            n_train: 5000,
            n_val: 1000,
            n_test: 2000,
            seed: 0,
            annotator_count: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("synthetic spec needs at least 2 classes"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("synthetic spec needs dim > 0"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.class_means.len() != self.num_classes {
            return Err(Error::invalid(format!(
                "{} class means for {} classes",
                self.class_means.len(),
                self.num_classes
            )));
        }
        if !self.mirror_offsets.is_empty() && self.mirror_offsets.len() != self.num_classes {
            return Err(Error::invalid(
                "mirror_offsets must be empty or one per class",
            ));
        }
        for v in self.class_means.iter().chain(&self.mirror_offsets) {
            if v.len() != self.dim || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "every mean and offset needs {} finite coordinates",
                    self.dim
                )));
            }
        }
        let comps = self.oracle_unchecked().components;
        for a in 0..self.num_classes {
            for b in a + 1..self.num_classes {
                let mut ca = comps[a].clone();
                let mut cb = comps[b].clone();
                ca.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
                cb.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
                if ca == cb {
                    return Err(Error::invalid(format!(
                        "classes {a} and {b} have identical components; their posterior is degenerate"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn oracle(&self) -> Result<PosteriorOracle> {
        self.validate()?;
        Ok(self.oracle_unchecked())
    }

    fn oracle_unchecked(&self) -> PosteriorOracle {
        let components = self
            .class_means
            .iter()
            .enumerate()
            .map(|(c, mean)| match self.mirror_offsets.get(c) {
                None => vec![mean.clone()],
                Some(off) => vec![
                    mean.iter().zip(off).map(|(m, o)| m + o).collect(),
                    mean.iter().zip(off).map(|(m, o)| m - o).collect(),
                ],
            })
            .collect();
        PosteriorOracle {
            components,
            sigma: self.sigma,
        }
    }
}

/// The generative parameters, able to evaluate the exact class posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOracle {
    /// Component means per class.
    pub components: Vec<Vec<Vec<f64>>>,
    pub sigma: f64,
}

impl PosteriorOracle {
    pub fn num_classes(&self) -> usize {
        self.components.len()
    }

    /// Exact `p(c | x)` under a uniform class prior.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let scores: Vec<f64> = self
            .components
            .iter()
            .map(|comps| {
                let logs: Vec<f64> = comps
                    .iter()
                    .map(|m| -inv * m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .collect();
                log_sum_exp(&logs)
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws one index from the distribution `p`.
pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Train/val/test splits plus the oracle that generated them.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub oracle: PosteriorOracle,
}

impl Bundle {
    /// Copy of `ds` with every sample carrying its exact posterior (or an
    /// `annotators`-draw histogram of it). This is the extra resource the
    /// distribution-supervised baselines consume.
    pub fn with_opinions(&self, ds: &Dataset, annotators: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = ds.clone();
        for s in &mut out.samples {
            let post = self.oracle.posterior(&s.features);
            s.opinion_dist = Some(opinion(&post, annotators, &mut rng));
        }
        out
    }
}

fn opinion<R: Rng + ?Sized>(post: &[f64], annotators: usize, rng: &mut R) -> Vec<f64> {
    if annotators == 0 {
        return post.to_vec();
    }
    let mut counts = vec![0usize; post.len()];
    for _ in 0..annotators {
        counts[sample_index(post, rng)] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / annotators as f64)
        .collect()
}

/// Draws the three splits. Train and val carry single gold labels sampled
/// from the posterior; test additionally carries opinion distributions.
pub fn generate(spec: &SynthSpec) -> Result<Bundle> {
    let oracle = spec.oracle()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = |name: &str, n: usize, with_opinion: bool| -> Result<Dataset> {
        let samples = (0..n)
            .map(|i| {
                let class = rng.random_range(0..spec.num_classes);
                let comps = &oracle.components[class];
                let comp = if comps.len() > 1 {
                    rng.random_range(0..comps.len())
                } else {
                    0
                };
                let features: Vec<f64> = comps[comp]
                    .iter()
                    .map(|m| m + spec.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let post = oracle.posterior(&features);
                let gold_label = sample_index(&post, &mut rng);
                let opinion_dist =
                    with_opinion.then(|| opinion(&post, spec.annotator_count, &mut rng));
                Sample {
                    id: format!("{name}-{i:06}"),
                    features,
                    gold_label,
                    opinion_dist,
                }
            })
            .collect();
        Dataset::new(samples, spec.num_classes)
    };
    let train = split("train", spec.n_train, false)?;
    let val = split("val", spec.n_val, false)?;
    let test = split("test", spec.n_test, true)?;
    Ok(Bundle {
        train,
        val,
        test,
        oracle,
    })
}
