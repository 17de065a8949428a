//! Core corpus value types.

use serde::{Deserialize, Serialize};

use super::mr::MeaningRepresentation;
use super::schema::DomainSchema;
use super::tokenizer::{detokenize, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

/// A surface utterance in canonical tokenized form. `raw` is always the
/// detokenization of `tokens`, so the two round-trip exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Utterance {
    /// Tokenize arbitrary source text into canonical form.
    pub fn from_raw(text: &str) -> Self {
        let tokens = tokenize(text);
        Utterance { raw: detokenize(&tokens), tokens }
    }

    /// Wrap an already-tokenized stream (e.g. delexicalized tokens, which
    /// must not be re-tokenized because placeholders are case-sensitive).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Utterance { raw: detokenize(&tokens), tokens }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One MR paired with its reference utterances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Example {
    pub mr: MeaningRepresentation,
    pub refs: Vec<Utterance>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: DomainSchema,
    pub examples: Vec<Example>,
    pub split: Split,
}

impl Dataset {
    pub fn new(schema: DomainSchema, split: Split) -> Self {
        Dataset { schema, examples: Vec::new(), split }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Group examples that share a canonical MR, preserving first-seen order.
    /// Used for multi-reference evaluation of corpora stored one row per
    /// reference.
    pub fn grouped_by_mr(&self) -> Vec<(MeaningRepresentation, Vec<&Utterance>)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: std::collections::HashMap<String, (MeaningRepresentation, Vec<&Utterance>)> =
            std::collections::HashMap::new();
        for ex in &self.examples {
            let key = ex.mr.canonical_string(&self.schema);
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (ex.mr.clone(), Vec::new())
            });
            entry.1.extend(ex.refs.iter());
        }
        order
            .into_iter()
            .map(|k| groups.remove(&k).expect("group recorded"))
            .collect()
    }
}
