//! MR normalization against reference texts.
//!
//! Training corpora occasionally contradict their references (an MR without
//! an eatType whose reference calls the venue a restaurant, or a verbal
//! price/rating value where the reference spells out the numeric form).
//! These data-driven rules reconcile the MR with its reference, touching the
//! MR only; the test split is never modified.

use regex::Regex;
use serde::Deserialize;

use crate::error::{Error, Result};

use super::types::{Dataset, Split};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddIfMentionedRule {
    pub attribute: String,
    pub value: String,
    /// Regex over the canonical (lowercased, tokenized) reference text.
    pub cue: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueSwapRule {
    pub attribute: String,
    pub from: String,
    pub to: String,
    /// Fires only when this matches the reference.
    pub cue: String,
    /// Suppresses the rule when this matches the reference.
    #[serde(default)]
    pub block: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    #[serde(default)]
    pub add_if_mentioned: Vec<AddIfMentionedRule>,
    #[serde(default)]
    pub value_swap: Vec<ValueSwapRule>,
}

impl NormalizationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationEdit {
    /// Index of the edited example in the dataset.
    pub example: usize,
    pub attribute: String,
    pub action: String,
}

struct CompiledAdd {
    attribute: String,
    value: String,
    cue: Regex,
}

struct CompiledSwap {
    attribute: String,
    from: String,
    to: String,
    cue: Regex,
    block: Option<Regex>,
}

fn compile(config: &NormalizationConfig, ds: &Dataset) -> Result<(Vec<CompiledAdd>, Vec<CompiledSwap>)> {
    let regex = |pat: &str| {
        Regex::new(pat).map_err(|e| Error::Config(format!("bad cue regex `{pat}`: {e}")))
    };
    let check_value = |attr: &str, value: &str| -> Result<String> {
        let def = ds
            .schema
            .attribute(attr)
            .ok_or_else(|| Error::Config(format!("normalization rule references unknown attribute `{attr}`")))?;
        def.canonical_value(value).ok_or_else(|| {
            Error::Config(format!("normalization rule value `{value}` not in vocabulary of `{}`", def.name))
        })
    };
    let mut adds = Vec::new();
    for rule in &config.add_if_mentioned {
        adds.push(CompiledAdd {
            attribute: ds.schema.attribute(&rule.attribute).map(|a| a.name.clone()).unwrap_or_default(),
            value: check_value(&rule.attribute, &rule.value)?,
            cue: regex(&rule.cue)?,
        });
    }
    let mut swaps = Vec::new();
    for rule in &config.value_swap {
        swaps.push(CompiledSwap {
            attribute: ds.schema.attribute(&rule.attribute).map(|a| a.name.clone()).unwrap_or_default(),
            from: check_value(&rule.attribute, &rule.from)?,
            to: check_value(&rule.attribute, &rule.to)?,
            cue: regex(&rule.cue)?,
            block: rule.block.as_deref().map(regex).transpose()?,
        });
    }
    Ok((adds, swaps))
}

/// Apply normalization rules to the train or valid split; the test split is
/// returned untouched. Every MR edit is reported.
pub fn normalize_dataset(
    ds: &Dataset,
    config: &NormalizationConfig,
) -> Result<(Dataset, Vec<NormalizationEdit>)> {
    let (adds, swaps) = compile(config, ds)?;
    let mut out = ds.clone();
    let mut edits = Vec::new();
    if ds.split == Split::Test {
        return Ok((out, edits));
    }
    for (i, ex) in out.examples.iter_mut().enumerate() {
        let mentions = |re: &Regex| ex.refs.iter().any(|r| re.is_match(&r.raw));
        for rule in &adds {
            if !ex.mr.has_attribute(&rule.attribute) && mentions(&rule.cue) {
                ex.mr.slots.push((rule.attribute.clone(), rule.value.clone()));
                ex.mr.canonicalize(&ds.schema);
                edits.push(NormalizationEdit {
                    example: i,
                    attribute: rule.attribute.clone(),
                    action: format!("added {}[{}]", rule.attribute, rule.value),
                });
            }
        }
        for rule in &swaps {
            let blocked = rule.block.as_ref().is_some_and(mentions);
            if ex.mr.value_of(&rule.attribute) == Some(rule.from.as_str()) && mentions(&rule.cue) && !blocked {
                for (attr, value) in &mut ex.mr.slots {
                    if *attr == rule.attribute {
                        *value = rule.to.clone();
                    }
                }
                edits.push(NormalizationEdit {
                    example: i,
                    attribute: rule.attribute.clone(),
                    action: format!("{}[{}] -> {}[{}]", rule.attribute, rule.from, rule.attribute, rule.to),
                });
            }
        }
    }
    Ok((out, edits))
}
