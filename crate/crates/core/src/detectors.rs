//! OOD scoring rules. Every score is oriented "higher = more in-distribution";
//! a detector flags an input as OOD when its score falls below a threshold.
//!
//! Oracle detectors (simulation only): the exact LDA posterior, scored by its
//! maximum class probability, and the exact ID mixture log-density.
//! External-output detectors: MSP over a class-probability vector, token
//! PPL (geometric-mean token probability) and sequence log-probability.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_add_exp, logistic, ExactNegSum};
use crate::simcore::{GmmSpec, SampleSet};

/// Tolerance on `sum(p) == 1` for class-probability vectors.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `p(y=1|x) = logistic(weights . x + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPosterior {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearPosterior {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn posterior(&self, x: &[f64]) -> f64 {
        logistic(self.logit(x))
    }

    /// `max(p, 1 - p)` for the binary posterior, i.e. `logistic(|logit|)`.
    pub fn msp(&self, x: &[f64]) -> f64 {
        logistic(libm::fabs(self.logit(x)))
    }
}

/// Bayes-optimal linear posterior for a spherical equal-covariance mixture.
pub fn fit_lda(id_spec: &GmmSpec) -> LinearPosterior {
    let s = id_spec.covariance_scale();
    let (mu0, mu1) = (id_spec.centroid(0), id_spec.centroid(1));
    let weights = mu1.iter().zip(mu0).map(|(a, b)| (a - b) / s).collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let p1 = id_spec.class1_prior();
    let bias = -(sq(mu1) - sq(mu0)) / (2.0 * s) + libm::log(p1 / (1.0 - p1));
    LinearPosterior { weights, bias }
}

/// Maximum softmax probability of a class-probability vector.
pub fn msp_score(class_probs: &[f64]) -> Result<f64> {
    validate_probs(class_probs)?;
    Ok(class_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub(crate) fn validate_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Empty("class probability vector"));
    }
    let mut sum = 0.0;
    for (index, &v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if v < 0.0 {
            return Err(Error::NegativeProbability { index, value: v });
        }
        sum += v;
    }
    if libm::fabs(sum - 1.0) > PROB_SUM_TOLERANCE {
        return Err(Error::ProbabilitySum {
            sum,
            tolerance: PROB_SUM_TOLERANCE,
        });
    }
    Ok(())
}

/// Exact ID mixture log-density `log sum_i prior_i N(x; mu^i, s I)`.
pub fn density_score(id_spec: &GmmSpec, x: &[f64]) -> Result<f64> {
    let d = id_spec.total_dims();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    Ok(MixtureDensity::new(id_spec).log_density(x))
}

/// Precomputed constants for repeated mixture log-density evaluation.
#[derive(Debug, Clone)]
struct MixtureDensity<'a> {
    spec: &'a GmmSpec,
    log_prior: [f64; 2],
    log_norm: f64,
    inv_two_var: f64,
}

impl<'a> MixtureDensity<'a> {
    fn new(spec: &'a GmmSpec) -> Self {
        let s = spec.covariance_scale();
        let p1 = spec.class1_prior();
        Self {
            spec,
            log_prior: [libm::log(1.0 - p1), libm::log(p1)],
            log_norm: -0.5 * spec.total_dims() as f64 * (LN_2PI + libm::log(s)),
            inv_two_var: 0.5 / s,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let dist2 = |mu: &[f64]| {
            mu.iter()
                .zip(x)
                .map(|(m, v)| {
                    let e = v - m;
                    e * e
                })
                .sum::<f64>()
        };
        let a = self.log_prior[0] - self.inv_two_var * dist2(self.spec.centroid(0));
        let b = self.log_prior[1] - self.inv_two_var * dist2(self.spec.centroid(1));
        self.log_norm + log_add_exp(a, b)
    }
}

/// Per-token natural-log probabilities of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TokenLogProbs(Vec<f64>);

impl TokenLogProbs {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("token log-probability sequence"));
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if v > 0.0 {
                return Err(Error::PositiveLogProb { index, value: v });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The sequence repeated `k` times.
    pub fn repeated(&self, k: usize) -> Self {
        let mut v = Vec::with_capacity(self.0.len() * k);
        for _ in 0..k {
            v.extend_from_slice(&self.0);
        }
        Self(v)
    }

    fn exact_sum(&self) -> ExactNegSum {
        let mut acc = ExactNegSum::new();
        self.0.iter().for_each(|&v| acc.add(v));
        acc
    }
}

impl<'de> Deserialize<'de> for TokenLogProbs {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        TokenLogProbs::new(values).map_err(serde::de::Error::custom)
    }
}

/// `exp((1/T) sum_t log p(x_t | x_<t))`, the geometric-mean token
/// probability. In `(0, 1]`; the conventional perplexity is its reciprocal.
///
/// The mean is the correctly rounded exact mean, so the score of a sequence
/// repeated k times is bit-identical to the score of the sequence.
pub fn ppl_score(tokens: &TokenLogProbs) -> f64 {
    let mean = tokens.exact_sum().mean().expect("TokenLogProbs is nonempty");
    libm::exp(mean)
}

/// `sum_t log p(x_t | x_<t)`, i.e. `log p(x)`. Length-biased: repeating a
/// sequence k times multiplies it by k.
pub fn seqprob_score(tokens: &TokenLogProbs) -> f64 {
    tokens.exact_sum().sum()
}

/// Scores with the orientation "higher = more in-distribution".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    detector_name: String,
    values: Vec<f64>,
}

impl ScoreSet {
    pub fn new(detector_name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            detector_name: detector_name.into(),
            values,
        })
    }

    pub fn detector_name(&self) -> &str {
        &self.detector_name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleDetector {
    MspOracle,
    DensityOracle,
}

impl OracleDetector {
    pub const ALL: [OracleDetector; 2] = [OracleDetector::MspOracle, OracleDetector::DensityOracle];

    pub fn name(self) -> &'static str {
        match self {
            OracleDetector::MspOracle => "msp_oracle",
            OracleDetector::DensityOracle => "density_oracle",
        }
    }
}

impl core::fmt::Display for OracleDetector {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Both oracle detectors for one ID spec, prepared once.
#[derive(Debug, Clone)]
pub struct OracleScorer<'a> {
    spec: &'a GmmSpec,
    posterior: LinearPosterior,
}

impl<'a> OracleScorer<'a> {
    pub fn new(id_spec: &'a GmmSpec) -> Self {
        Self {
            spec: id_spec,
            posterior: fit_lda(id_spec),
        }
    }

    pub fn posterior(&self) -> &LinearPosterior {
        &self.posterior
    }

    /// Scores every row of `samples`, preserving row order.
    pub fn score(&self, samples: &SampleSet, detector: OracleDetector) -> Result<ScoreSet> {
        if samples.dims() != self.spec.total_dims() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.total_dims(),
                actual: samples.dims(),
            });
        }
        let values = match detector {
            OracleDetector::MspOracle => samples.rows().map(|x| self.posterior.msp(x)).collect(),
            OracleDetector::DensityOracle => {
                let density = MixtureDensity::new(self.spec);
                samples.rows().map(|x| density.log_density(x)).collect()
            }
        };
        ScoreSet::new(detector.name(), values)
    }

    /// Strictly increasing transforms of the exact scores, for ranking.
    ///
    /// MSP is keyed by `|logit|`: `max(p, 1 - p)` rounds to 1.0 once
    /// `|logit|` exceeds about 37, which ties samples the exact score orders.
    /// AUROC and FAR95 depend only on order, so metrics from these keys are
    /// those of the exact detector. Density keys equal its scores.
    pub fn rank_keys(&self, samples: &SampleSet, detector: OracleDetector) -> Result<ScoreSet> {
        match detector {
            OracleDetector::MspOracle => {
                if samples.dims() != self.spec.total_dims() {
                    return Err(Error::DimensionMismatch {
                        expected: self.spec.total_dims(),
                        actual: samples.dims(),
                    });
                }
                let values = samples.rows().map(|x| libm::fabs(self.posterior.logit(x))).collect();
                ScoreSet::new(detector.name(), values)
            }
            OracleDetector::DensityOracle => self.score(samples, detector),
        }
    }
}

/// Scores a sample set with one oracle detector built from `id_spec`.
pub fn score_sampleset(id_spec: &GmmSpec, samples: &SampleSet, detector: OracleDetector) -> Result<ScoreSet> {
    OracleScorer::new(id_spec).score(samples, detector)
}
