//! Token vocabularies with deterministic index assignment.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::linearize::{linearize, LinMode};
use super::schema::{value_slug, AttributeKind, DomainSchema};
use super::types::Dataset;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Build a vocabulary from token counts: the four specials first, then
    /// all counted tokens sorted by frequency descending, ties broken
    /// lexicographically. Deterministic for equal inputs.
    pub fn from_counts(counts: &HashMap<String, u64>) -> Vocab {
        let mut entries: Vec<(&String, &u64)> = counts
            .iter()
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(entries.into_iter().map(|(t, _)| t.clone()));
        Vocab::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Encode, failing on any out-of-vocabulary token. Inputs are closed
    /// vocabularies, so an OOV input token is a caller bug.
    pub fn encode_strict(&self, tokens: &[String]) -> Result<Vec<u32>> {
        tokens
            .iter()
            .map(|t| self.id(t).ok_or_else(|| Error::TokenNotInVocab(t.clone())))
            .collect()
    }

    /// Encode with UNK substitution for out-of-vocabulary tokens.
    pub fn encode_lossy(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i as usize].clone()).collect()
    }

    /// One token per line; the line number is the index.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS.map(String::from) {
            return Err(Error::Invalid(format!(
                "vocab file {} does not start with the four special tokens",
                path.display()
            )));
        }
        Ok(Vocab::from_tokens(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Every input token the schema can produce under `mode`, independent of any
/// corpus. Including the full universe keeps sampled novel MRs in-vocabulary.
pub fn schema_token_universe(schema: &DomainSchema, mode: LinMode) -> Vec<String> {
    let mut tokens = Vec::new();
    match mode {
        LinMode::E2eLex => {
            for attr in &schema.attributes {
                tokens.push(format!("{}_n/a", attr.token));
                for v in &attr.values {
                    tokens.push(format!("{}_{}", attr.token, value_slug(v)));
                }
                if attr.kind == AttributeKind::DontCare {
                    tokens.push(format!("{}_dont_care", attr.token));
                }
            }
        }
        LinMode::E2eDelex => {
            for attr in &schema.attributes {
                if attr.delexicalizable && schema.is_required(&attr.name) {
                    continue;
                }
                if attr.delexicalizable {
                    tokens.push(format!("{}_present", attr.token));
                    tokens.push(format!("{}_n/a", attr.token));
                } else {
                    tokens.push(format!("{}_n/a", attr.token));
                    for v in &attr.values {
                        tokens.push(format!("{}_{}", attr.token, value_slug(v)));
                    }
                    if attr.kind == AttributeKind::DontCare {
                        tokens.push(format!("{}_dont_care", attr.token));
                    }
                }
            }
        }
        LinMode::DaVariable => {
            for act in &schema.acts {
                tokens.push(act.name.clone());
            }
            for attr in &schema.attributes {
                if attr.kind == AttributeKind::DontCare {
                    tokens.push(format!("{}_dont_care", attr.token));
                }
                match attr.kind {
                    AttributeKind::Binary => {
                        tokens.push(format!("{}_yes", attr.token));
                        tokens.push(format!("{}_no", attr.token));
                    }
                    _ if attr.delexicalizable => tokens.push(attr.token.clone()),
                    _ => {
                        for v in &attr.values {
                            tokens.push(format!("{}_{}", attr.token, value_slug(v)));
                        }
                    }
                }
            }
        }
    }
    tokens.sort();
    tokens.dedup();
    tokens
}

/// Build (input, output) vocabularies from a training dataset. The input side
/// covers the schema's whole token universe plus anything observed; the
/// output side covers all reference tokens. Indices are deterministic.
pub fn build_vocab(ds: &Dataset, mode: LinMode) -> (Vocab, Vocab) {
    let mut input_counts: HashMap<String, u64> = HashMap::new();
    for token in schema_token_universe(&ds.schema, mode) {
        input_counts.entry(token).or_insert(0);
    }
    let mut output_counts: HashMap<String, u64> = HashMap::new();
    for ex in &ds.examples {
        for token in linearize(&ex.mr, &ds.schema, mode).tokens {
            *input_counts.entry(token).or_insert(0) += 1;
        }
        for r in &ex.refs {
            for token in &r.tokens {
                *output_counts.entry(token.clone()).or_insert(0) += 1;
            }
        }
    }
    (Vocab::from_counts(&input_counts), Vocab::from_counts(&output_counts))
}
