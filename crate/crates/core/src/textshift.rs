//! Controlled text shifts and the bag-of-words oracle detector.
//!
//! Two constructions turn an ID corpus into OOD data: appending filler text
//! (a background shift: label-irrelevant content grows) and moving classes
//! from the ID side to the OOD side (a semantic shift). The oracle detector
//! is a logistic regression on raw token counts trained with access to both
//! sides, which upper-bounds what a detector could achieve on a pair.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detectors::ScoreSet;
use crate::error::{invalid, Error, Result};
use crate::math::logistic;
use crate::metrics::EvalReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub example_id: String,
    pub text: String,
    #[serde(default, rename = "class", skip_serializing_if = "Option::is_none")]
    pub class_label: Option<String>,
}

/// Ordered examples with unique ids and nonempty texts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    examples: Vec<Example>,
}

impl Corpus {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for ex in &examples {
            if !seen.insert(ex.example_id.as_str()) {
                return Err(invalid(
                    "example_id",
                    alloc::format!("duplicate id `{}`", ex.example_id),
                ));
            }
            if ex.text.trim().is_empty() {
                return Err(invalid(
                    "text",
                    alloc::format!("example `{}` has empty text", ex.example_id),
                ));
            }
        }
        Ok(Self { examples })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }
}

/// Appends to every example an independently drawn contiguous run of
/// exactly `length_words` words from the filler corpus (its texts read as one
/// word stream, in order), separated by a single space.
pub fn append_filler(corpus: &Corpus, filler: &Corpus, length_words: usize, seed: u64) -> Result<Corpus> {
    if length_words == 0 {
        return Err(invalid("length_words", "must be at least 1"));
    }
    if filler.is_empty() {
        return Err(Error::Empty("filler corpus"));
    }
    let words: Vec<&str> = filler.examples.iter().flat_map(|e| e.text.split_whitespace()).collect();
    if words.len() < length_words {
        return Err(Error::FillerTooShort {
            available: words.len(),
            requested: length_words,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last_start = words.len() - length_words;
    let examples = corpus
        .examples
        .iter()
        .map(|ex| {
            let start = rng.random_range(0..=last_start);
            let mut text = ex.text.clone();
            for w in &words[start..start + length_words] {
                text.push(' ');
                text.push_str(w);
            }
            Example { text, ..ex.clone() }
        })
        .collect();
    Ok(Corpus { examples })
}

/// Splits a labeled corpus into (examples of `id_classes`, the rest), both in
/// input order.
pub fn partition_by_class(corpus: &Corpus, id_classes: &[String]) -> Result<(Corpus, Corpus)> {
    if id_classes.is_empty() {
        return Err(invalid("id_classes", "at least one ID class is required"));
    }
    let mut present = BTreeSet::new();
    for ex in &corpus.examples {
        match &ex.class_label {
            Some(c) => {
                present.insert(c.as_str());
            }
            None => return Err(Error::Unlabeled(ex.example_id.clone())),
        }
    }
    if let Some(unknown) = id_classes.iter().find(|c| !present.contains(c.as_str())) {
        return Err(Error::UnknownClass(unknown.clone()));
    }
    let wanted: BTreeSet<&str> = id_classes.iter().map(String::as_str).collect();
    let (id, ood): (Vec<Example>, Vec<Example>) = corpus
        .examples
        .iter()
        .cloned()
        .partition(|ex| wanted.contains(ex.class_label.as_deref().unwrap_or_default()));
    Ok((Corpus { examples: id }, Corpus { examples: ood }))
}

/// Lowercase, split on Unicode whitespace, trim non-alphanumeric characters
/// from both ends of each token; tokens that trim to nothing are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BowConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub min_token_count: usize,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            min_token_count: 2,
        }
    }
}

impl BowConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive and finite"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(invalid("l2", "must be nonnegative and finite"));
        }
        Ok(())
    }
}

/// Sparse count vector: `(vocabulary index, count)` sorted by index.
pub type SparseCounts = Vec<(usize, f64)>;

/// Binary logistic regression over raw token counts; OOD is class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: BowConfig,
    /// Training loss before the first and after every epoch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_trace: Vec<f64>,
}

impl BowModel {
    pub fn featurize(&self, text: &str) -> SparseCounts {
        featurize(&self.vocabulary, text)
    }

    /// Predicted probability that `text` is OOD.
    pub fn predict_ood(&self, text: &str) -> f64 {
        let x = self.featurize(text);
        logistic(dot(&self.weights, &x) + self.bias)
    }
}

fn featurize(vocabulary: &BTreeMap<String, usize>, text: &str) -> SparseCounts {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in tokenize(text) {
        if let Some(&i) = vocabulary.get(&tok) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

fn dot(weights: &[f64], x: &SparseCounts) -> f64 {
    x.iter().map(|&(i, c)| weights[i] * c).sum()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// Regularized mean logistic loss over sparse documents. Parameters are the
/// weights followed by the bias; the bias is not regularized.
#[derive(Debug, Clone)]
pub struct BowObjective {
    docs: Vec<SparseCounts>,
    labels: Vec<f64>,
    dims: usize,
    l2: f64,
}

impl BowObjective {
    pub fn new(docs: Vec<SparseCounts>, labels: Vec<f64>, dims: usize, l2: f64) -> Result<Self> {
        if docs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: docs.len(),
                actual: labels.len(),
            });
        }
        if docs.is_empty() {
            return Err(Error::Empty("training documents"));
        }
        Ok(Self { docs, labels, dims, l2 })
    }

    pub fn n_params(&self) -> usize {
        self.dims + 1
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let (w, b) = params.split_at(self.dims);
        let b = b[0];
        let data: f64 = self
            .docs
            .iter()
            .zip(&self.labels)
            .map(|(x, &y)| {
                let z = dot(w, x) + b;
                softplus(z) - y * z
            })
            .sum();
        data / self.docs.len() as f64 + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let (w, b) = params.split_at(self.dims);
        let b = b[0];
        let mut grad = alloc::vec![0.0; self.n_params()];
        for (x, &y) in self.docs.iter().zip(&self.labels) {
            let r = logistic(dot(w, x) + b) - y;
            for &(i, c) in x {
                grad[i] += r * c;
            }
            grad[self.dims] += r;
        }
        let n = self.docs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        for (g, wi) in grad.iter_mut().zip(w) {
            *g += self.l2 * wi;
        }
        grad
    }
}

const MAX_STEP_HALVINGS: u32 = 80;

/// Full-batch gradient descent from zero. Each epoch tries a step of
/// `learning_rate` and halves it until the loss does not increase; if no
/// such step exists at `learning_rate * 2^-80` training stops.
fn descend(objective: &BowObjective, config: &BowConfig) -> (Vec<f64>, Vec<f64>) {
    let mut params = alloc::vec![0.0; objective.n_params()];
    let mut loss = objective.loss(&params);
    let mut trace = alloc::vec![loss];
    'epochs: for _ in 0..config.epochs {
        let grad = objective.gradient(&params);
        let mut step = config.learning_rate;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let candidate_loss = objective.loss(&candidate);
            if candidate_loss <= loss {
                params = candidate;
                loss = candidate_loss;
                trace.push(loss);
                continue 'epochs;
            }
            step *= 0.5;
        }
        break;
    }
    (params, trace)
}

/// Trains the oracle: tokenize, keep tokens seen at least `min_token_count`
/// times across both sides, count features, and fit with OOD as positive.
pub fn fit_bow_logreg(id_texts: &[&str], ood_texts: &[&str], config: &BowConfig) -> Result<BowModel> {
    config.validate()?;
    if id_texts.is_empty() {
        return Err(Error::Empty("ID texts"));
    }
    if ood_texts.is_empty() {
        return Err(Error::Empty("OOD texts"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in id_texts.iter().chain(ood_texts) {
        for tok in tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let vocabulary: BTreeMap<String, usize> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_token_count)
        .enumerate()
        .map(|(i, (tok, _))| (tok, i))
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let docs: Vec<SparseCounts> = id_texts
        .iter()
        .chain(ood_texts)
        .map(|t| featurize(&vocabulary, t))
        .collect();
    let labels: Vec<f64> = core::iter::repeat_n(0.0, id_texts.len())
        .chain(core::iter::repeat_n(1.0, ood_texts.len()))
        .collect();
    let objective = BowObjective::new(docs, labels, vocabulary.len(), config.l2)?;
    let (mut params, loss_trace) = descend(&objective, config);
    let bias = params.pop().expect("bias parameter");
    Ok(BowModel {
        vocabulary,
        weights: params,
        bias,
        config: *config,
        loss_trace,
    })
}

/// Report and trained model of one oracle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub report: EvalReport,
    pub train_fraction: f64,
    pub seed: u64,
    pub n_train_id: usize,
    pub n_train_ood: usize,
    pub model: BowModel,
}

pub const ORACLE_DETECTOR: &str = "bow_oracle";
const MIN_EXAMPLES_PER_SIDE: usize = 5;

/// Shuffled (train, held-out) index split. Both sides use a stream seeded by
/// `seed` alone, so two equally sized sides are split identically.
fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = crate::math::round_half_up(train_fraction * n as f64).min(n);
    let held = idx.split_off(n_train);
    (idx, held)
}

/// Per-side split at `train_fraction`, train on the train portions and
/// evaluate `1 - P(OOD)` on the held-out portions.
pub fn oracle_detect(
    id_texts: &[&str],
    ood_texts: &[&str],
    train_fraction: f64,
    seed: u64,
    config: &BowConfig,
) -> Result<OracleOutcome> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(invalid("train_fraction", "must lie in (0, 1]"));
    }
    for (side, texts) in [("ID", id_texts), ("OOD", ood_texts)] {
        if texts.len() < MIN_EXAMPLES_PER_SIDE {
            return Err(invalid(
                "texts",
                alloc::format!(
                    "{side} side has {} examples, at least {MIN_EXAMPLES_PER_SIDE} required",
                    texts.len()
                ),
            ));
        }
    }
    let (id_train, id_held) = split_indices(id_texts.len(), train_fraction, seed);
    let (ood_train, ood_held) = split_indices(ood_texts.len(), train_fraction, seed);
    if id_held.is_empty() || ood_held.is_empty() {
        return Err(invalid("train_fraction", "split leaves an empty held-out set"));
    }
    if id_train.is_empty() || ood_train.is_empty() {
        return Err(invalid("train_fraction", "split leaves an empty training set"));
    }
    let pick = |texts: &[&'_ str], idx: &[usize]| idx.iter().map(|&i| texts[i].to_string()).collect::<Vec<_>>();
    let id_train_texts = pick(id_texts, &id_train);
    let ood_train_texts = pick(ood_texts, &ood_train);
    let model = fit_bow_logreg(
        &id_train_texts.iter().map(String::as_str).collect::<Vec<_>>(),
        &ood_train_texts.iter().map(String::as_str).collect::<Vec<_>>(),
        config,
    )?;
    let score = |texts: &[&str], idx: &[usize]| -> Result<ScoreSet> {
        ScoreSet::new(
            ORACLE_DETECTOR,
            idx.iter().map(|&i| 1.0 - model.predict_ood(texts[i])).collect(),
        )
    };
    let report = EvalReport::from_scores(&score(id_texts, &id_held)?, &score(ood_texts, &ood_held)?)?;
    Ok(OracleOutcome {
        report,
        train_fraction,
        seed,
        n_train_id: id_train.len(),
        n_train_ood: ood_train.len(),
        model,
    })
}
