//! Externally computed model outputs and their evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detectors::{msp_score, ppl_score, seqprob_score, validate_probs, TokenLogProbs};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Id,
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    ClassProbs,
    TokenLogprobs,
}

impl PayloadKind {
    pub fn name(self) -> &'static str {
        match self {
            PayloadKind::ClassProbs => "class_probs",
            PayloadKind::TokenLogprobs => "token_logprobs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    ClassProbs(Vec<f64>),
    TokenLogprobs(TokenLogProbs),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::ClassProbs(_) => PayloadKind::ClassProbs,
            Payload::TokenLogprobs(_) => PayloadKind::TokenLogprobs,
        }
    }
}

/// One example's model output. Construction validates the payload against
/// its detector's preconditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    example_id: String,
    split: Split,
    payload: Payload,
}

impl ScoreRecord {
    pub fn new(example_id: impl Into<String>, split: Split, payload: Payload) -> Result<Self> {
        if let Payload::ClassProbs(p) = &payload {
            validate_probs(p)?;
        }
        Ok(Self {
            example_id: example_id.into(),
            split,
            payload,
        })
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }
}

/// Scoring rule for external outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextDetector {
    Msp,
    Ppl,
    Logpx,
}

impl TextDetector {
    pub fn name(self) -> &'static str {
        match self {
            TextDetector::Msp => "msp",
            TextDetector::Ppl => "ppl",
            TextDetector::Logpx => "logpx",
        }
    }

    pub fn payload_kind(self) -> PayloadKind {
        match self {
            TextDetector::Msp => PayloadKind::ClassProbs,
            TextDetector::Ppl | TextDetector::Logpx => PayloadKind::TokenLogprobs,
        }
    }

    pub fn score(self, payload: &Payload) -> Result<f64> {
        match (self, payload) {
            (TextDetector::Msp, Payload::ClassProbs(p)) => msp_score(p),
            (TextDetector::Ppl, Payload::TokenLogprobs(t)) => Ok(ppl_score(t)),
            (TextDetector::Logpx, Payload::TokenLogprobs(t)) => Ok(seqprob_score(t)),
            (detector, payload) => Err(Error::KindMismatch {
                detector: detector.name(),
                expected: detector.payload_kind().name(),
                found: payload.kind().name(),
            }),
        }
    }
}

impl core::str::FromStr for TextDetector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msp" => Ok(TextDetector::Msp),
            "ppl" => Ok(TextDetector::Ppl),
            "logpx" => Ok(TextDetector::Logpx),
            other => Err(crate::error::invalid(
                "detector",
                alloc::format!("unknown detector `{other}`; valid values: msp, ppl, logpx"),
            )),
        }
    }
}

/// Scores every record, splits by ID/OOD and reports AUROC and FAR95.
pub fn evaluate_records(records: &[ScoreRecord], detector: TextDetector) -> Result<EvalReport> {
    let mut id = Vec::new();
    let mut ood = Vec::new();
    for record in records {
        let s = detector.score(&record.payload)?;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                index: id.len() + ood.len(),
            });
        }
        match record.split {
            Split::Id => id.push(s),
            Split::Ood => ood.push(s),
        }
    }
    if id.is_empty() {
        return Err(Error::Empty("ID split"));
    }
    if ood.is_empty() {
        return Err(Error::Empty("OOD split"));
    }
    EvalReport::from_values(detector.name(), &id, &ood)
}
