//! Corpus JSON Lines: one `{"example_id": ..., "text": ..., "class": ...}`
//! object per line, `class` optional.

use std::path::Path;

use oodshift_core::textshift::{Corpus, Example};

use crate::error::{Error, Result};

pub fn parse_corpus(text: &str, path: &Path) -> Result<Corpus> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example =
            serde_json::from_str(line).map_err(|e| Error::line(path, i + 1, format!("invalid example: {e}")))?;
        examples.push(ex);
    }
    Ok(Corpus::new(examples)?)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    corpus
        .examples()
        .iter()
        .map(|ex| serde_json::to_string(ex).expect("example serializes") + "\n")
        .collect()
}
