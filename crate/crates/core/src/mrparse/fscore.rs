//! Slot-level parser scoring: precision, recall, and F1 over (attribute,
//! value) pairs, per attribute and pooled, plus dialogue-act accuracy.

use std::collections::BTreeMap;

use crate::corpus::mr::MeaningRepresentation;
use crate::error::{Error, Result};
use crate::mrparse::rulepack::ParseOutcome;

/// True/false positive and false negative tallies for one attribute (or the
/// pool). Matching is multiset-based so repeated slots count once each.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PrfCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PrfCounts {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// One parser prediction for one utterance: the asserted act and slot pairs.
#[derive(Debug, Clone)]
pub struct SlotPrediction {
    pub act: String,
    pub slots: Vec<(String, String)>,
}

/// Parser score over an aligned prediction/gold corpus. `per_attribute`
/// covers every attribute with any mass (tp+fp+fn > 0).
#[derive(Debug, Clone)]
pub struct ParserScore {
    pub per_attribute: BTreeMap<String, PrfCounts>,
    pub micro: PrfCounts,
    pub act_accuracy: f64,
    pub items: usize,
}

impl ParserScore {
    /// Unweighted mean of per-attribute F1. Zero when no attribute has mass.
    pub fn macro_f1(&self) -> f64 {
        if self.per_attribute.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.per_attribute.values().map(|c| c.f1()).sum();
        sum / self.per_attribute.len() as f64
    }
}

/// Score aligned predictions against gold MRs. Slots are compared as
/// (attribute, value) multisets per item; acts by exact string equality.
pub fn parser_fscore(
    pred: &[SlotPrediction],
    gold: &[MeaningRepresentation],
) -> Result<ParserScore> {
    if pred.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "prediction/gold length mismatch: {} vs {}",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Invalid("empty scoring corpus".into()));
    }
    let mut per_attribute: BTreeMap<String, PrfCounts> = BTreeMap::new();
    let mut acts_right = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        if p.act == g.act {
            acts_right += 1;
        }
        // Multiset intersection: count min(pred, gold) occurrences per pair.
        let mut pred_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (a, v) in &p.slots {
            *pred_counts.entry((a.as_str(), v.as_str())).or_default() += 1;
        }
        let mut gold_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (a, v) in &g.slots {
            *gold_counts.entry((a.as_str(), v.as_str())).or_default() += 1;
        }
        for (&(attr, value), &n_pred) in &pred_counts {
            let n_gold = *gold_counts.get(&(attr, value)).unwrap_or(&0);
            let tp = n_pred.min(n_gold);
            let entry = per_attribute.entry(attr.to_string()).or_default();
            entry.tp += tp;
            entry.fp += n_pred - tp;
        }
        for (&(attr, value), &n_gold) in &gold_counts {
            let n_pred = *pred_counts.get(&(attr, value)).unwrap_or(&0);
            let entry = per_attribute.entry(attr.to_string()).or_default();
            entry.fn_ += n_gold.saturating_sub(n_pred);
        }
    }
    per_attribute.retain(|_, c| c.tp + c.fp + c.fn_ > 0);
    let micro = per_attribute.values().fold(PrfCounts::default(), |acc, c| PrfCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    Ok(ParserScore {
        per_attribute,
        micro,
        act_accuracy: acts_right as f64 / gold.len() as f64,
        items: gold.len(),
    })
}

/// Lenient extraction of a prediction from a parse outcome: every asserted
/// (attribute, value) from the evidence, whether or not the MR validated.
/// The act falls back through the single matched cue to `inform`.
pub fn predictions_from_outcomes(outcomes: &[ParseOutcome]) -> Vec<SlotPrediction> {
    outcomes
        .iter()
        .map(|o| {
            let act = if let Some(mr) = &o.mr {
                mr.act.clone()
            } else if o.acts_matched.len() == 1 {
                o.acts_matched[0].clone()
            } else {
                "inform".to_string()
            };
            let mut slots = Vec::new();
            for (attr, ev) in &o.evidence {
                for v in ev.asserted_values() {
                    slots.push((attr.clone(), v.to_string()));
                }
            }
            SlotPrediction { act, slots }
        })
        .collect()
}
