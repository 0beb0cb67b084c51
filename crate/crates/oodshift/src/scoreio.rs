//! JSON Lines score files.
//!
//! Line 1 is a header object, every following nonblank line one record:
//!
//! ```text
//! {"kind": "token_logprobs", "log_base": 2}
//! {"example_id": "a", "split": "id", "token_logprobs": [-1.0, -0.5]}
//! {"example_id": "b", "split": "ood", "token_logprobs": [-3.2]}
//! ```
//!
//! `log_base` is `"e"`, `2` or `10`; log-probabilities are converted to
//! natural log on load. Class-probability files may omit it. A file holds a
//! single payload kind; diagnostics cite 1-based line numbers.

use std::fmt::Write as _;
use std::path::Path;

use oodshift_core::detectors::TokenLogProbs;
use oodshift_core::records::{Payload, PayloadKind, ScoreRecord, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    /// Multiplier taking a log in this base to a natural log.
    pub fn to_natural(self) -> f64 {
        match self {
            LogBase::E => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::Ten => std::f64::consts::LN_10,
        }
    }
}

impl Serialize for LogBase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LogBase::E => s.serialize_str("e"),
            LogBase::Two => s.serialize_u8(2),
            LogBase::Ten => s.serialize_u8(10),
        }
    }
}

impl<'de> Deserialize<'de> for LogBase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) if s == "e" => Ok(LogBase::E),
            serde_json::Value::Number(n) if n.as_f64() == Some(2.0) => Ok(LogBase::Two),
            serde_json::Value::Number(n) if n.as_f64() == Some(10.0) => Ok(LogBase::Ten),
            _ => Err(serde::de::Error::custom(format!(
                "log_base must be \"e\", 2 or 10, got {v}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub kind: PayloadKind,
    #[serde(default)]
    pub log_base: LogBase,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    example_id: String,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_logprobs: Option<Vec<f64>>,
}

/// A parsed score file: header plus records with log-probabilities in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub header: Header,
    pub records: Vec<ScoreRecord>,
}

impl RecordFile {
    /// Parses file contents; `path` only labels diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (header_line, header_text) = lines
            .next()
            .ok_or_else(|| Error::line(path, 1, "missing header line"))?;
        let header: Header = serde_json::from_str(header_text)
            .map_err(|e| Error::line(path, header_line, format!("invalid header: {e}")))?;

        let scale = header.log_base.to_natural();
        let mut records = Vec::new();
        for (line, text) in lines {
            let raw: RawRecord =
                serde_json::from_str(text).map_err(|e| Error::line(path, line, format!("invalid record: {e}")))?;
            let payload = match (raw.class_probs, raw.token_logprobs) {
                (Some(p), None) => Payload::ClassProbs(p),
                (None, Some(t)) => {
                    let natural = if scale == 1.0 {
                        t
                    } else {
                        t.into_iter().map(|v| v * scale).collect()
                    };
                    Payload::TokenLogprobs(
                        TokenLogProbs::new(natural).map_err(|e| Error::line(path, line, e.to_string()))?,
                    )
                }
                (Some(_), Some(_)) => {
                    return Err(Error::line(
                        path,
                        line,
                        "record carries both class_probs and token_logprobs",
                    ))
                }
                (None, None) => return Err(Error::line(path, line, "record carries no payload")),
            };
            if payload.kind() != header.kind {
                return Err(Error::line(
                    path,
                    line,
                    format!(
                        "record payload is {} but the header declares {}",
                        payload.kind().name(),
                        header.kind.name()
                    ),
                ));
            }
            let record = ScoreRecord::new(raw.example_id, raw.split, payload)
                .map_err(|e| Error::line(path, line, e.to_string()))?;
            records.push(record);
        }
        Ok(Self { header, records })
    }

    /// Serializes back to JSON Lines, converting log-probabilities to the
    /// header's base.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        let scale = self.header.log_base.to_natural();
        for record in &self.records {
            let (class_probs, token_logprobs) = match record.payload() {
                Payload::ClassProbs(p) => (Some(p.clone()), None),
                Payload::TokenLogprobs(t) => (
                    None,
                    Some(if scale == 1.0 {
                        t.values().to_vec()
                    } else {
                        t.values().iter().map(|v| v / scale).collect()
                    }),
                ),
            };
            let raw = RawRecord {
                example_id: record.example_id().to_string(),
                split: record.split(),
                class_probs,
                token_logprobs,
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&raw).expect("record serializes"));
        }
        out
    }
}

/// Reads and validates a score file whose header must declare `declared_kind`.
pub fn load_records(path: &Path, declared_kind: PayloadKind) -> Result<Vec<ScoreRecord>> {
    let file = load_record_file(path)?;
    if file.header.kind != declared_kind {
        return Err(Error::line(
            path,
            1,
            format!(
                "header declares {} but {} was expected",
                file.header.kind.name(),
                declared_kind.name()
            ),
        ));
    }
    Ok(file.records)
}

pub fn load_record_file(path: &Path) -> Result<RecordFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RecordFile::parse(&text, path)
}
