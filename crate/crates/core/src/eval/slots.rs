//! Slot-error counting: how faithfully generated utterances realize their
//! MRs, judged by the rule parser's evidence. Scoring is lenient, unlike the
//! self-training filter: conflicting matches become errors, never discards,
//! so every output is scored.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::mr::MeaningRepresentation;
use crate::corpus::schema::DomainSchema;
use crate::corpus::types::Utterance;
use crate::error::{Error, Result};
use crate::mrparse::rulepack::{rule_parse, RulePack};

/// Error tallies for one attribute (or the whole corpus).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SlotErrorCounts {
    /// Gold value with no realization at all.
    pub missing: usize,
    /// Realized with a value the MR does not carry (substitutions and
    /// conflicting extra assertions).
    pub wrong_value: usize,
    /// Attribute asserted though absent from the MR.
    pub hallucinated: usize,
}

impl SlotErrorCounts {
    pub fn total(&self) -> usize {
        self.missing + self.wrong_value + self.hallucinated
    }

    fn absorb(&mut self, other: &SlotErrorCounts) {
        self.missing += other.missing;
        self.wrong_value += other.wrong_value;
        self.hallucinated += other.hallucinated;
    }

    fn is_zero(&self) -> bool {
        self.total() == 0
    }
}

/// One scored (item, attribute) cell with at least one error.
#[derive(Debug, Clone, Serialize)]
pub struct SlotErrorDetail {
    /// Index into the scored outputs.
    pub item: usize,
    pub attribute: String,
    pub counts: SlotErrorCounts,
    pub gold: Vec<String>,
    pub asserted: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotErrorReport {
    pub items: usize,
    /// Attribute → summed counts, every schema attribute present.
    pub per_attribute: BTreeMap<String, SlotErrorCounts>,
    pub totals: SlotErrorCounts,
    /// Every (item, attribute) with errors; summing these rows reproduces
    /// `per_attribute` and `totals`.
    pub details: Vec<SlotErrorDetail>,
}

/// Score one attribute's distinct gold values against distinct asserted
/// values. Substitutions count once as wrong-value, not missing+wrong.
fn score_attribute(gold: &BTreeSet<&str>, asserted: &BTreeSet<&str>) -> SlotErrorCounts {
    let mut counts = SlotErrorCounts::default();
    if gold.is_empty() {
        counts.hallucinated = asserted.len();
        return counts;
    }
    let unrealized = gold.difference(asserted).count();
    let extra = asserted.difference(gold).count();
    counts.wrong_value = extra;
    counts.missing = unrealized.saturating_sub(extra);
    counts
}

/// Count slot errors over generated outputs by parsing each utterance with
/// the rule pack and comparing asserted values against the source MR.
pub fn slot_errors(
    outputs: &[(MeaningRepresentation, Utterance)],
    pack: &RulePack,
    schema: &DomainSchema,
) -> Result<SlotErrorReport> {
    if outputs.is_empty() {
        return Err(Error::Invalid("slot error scoring needs at least one output".into()));
    }
    let mut per_attribute: BTreeMap<String, SlotErrorCounts> = schema
        .attributes
        .iter()
        .map(|a| (a.name.clone(), SlotErrorCounts::default()))
        .collect();
    let mut details = Vec::new();
    for (item, (mr, utt)) in outputs.iter().enumerate() {
        let outcome = rule_parse(utt, pack, schema);
        for def in &schema.attributes {
            let gold: BTreeSet<&str> = mr
                .slots
                .iter()
                .filter(|(a, _)| a.eq_ignore_ascii_case(&def.name))
                .map(|(_, v)| v.as_str())
                .collect();
            let asserted: BTreeSet<&str> = outcome
                .evidence_for(&def.name)
                .map(|e| e.asserted_values().into_iter().collect())
                .unwrap_or_default();
            let counts = score_attribute(&gold, &asserted);
            if !counts.is_zero() {
                per_attribute.get_mut(&def.name).expect("prefilled").absorb(&counts);
                details.push(SlotErrorDetail {
                    item,
                    attribute: def.name.clone(),
                    counts,
                    gold: gold.iter().map(|s| s.to_string()).collect(),
                    asserted: asserted.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
    }
    let mut totals = SlotErrorCounts::default();
    for counts in per_attribute.values() {
        totals.absorb(counts);
    }
    Ok(SlotErrorReport { items: outputs.len(), per_attribute, totals, details })
}
