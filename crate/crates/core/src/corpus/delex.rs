//! Delexicalization: replacing slot-value verbalizations with placeholder
//! tokens, and the exact inverse.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mr::MeaningRepresentation;
use super::schema::{AttributeKind, DomainSchema, DONT_CARE};
use super::tokenizer::tokenize;
use super::types::Utterance;

/// Placeholder-to-value mapping for one delexicalized utterance. Placeholders
/// are unique per slot occurrence; repeated attributes get indexed
/// placeholders (`WEIGHT_1`, `WEIGHT_2`), unrepeated ones plain (`NAME`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelexMapping {
    pub entries: Vec<(String, String)>,
}

impl DelexMapping {
    pub fn value_for(&self, placeholder: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(p, _)| p == placeholder)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Placeholder for the `occurrence`-th slot (0-based) of an attribute that
/// fills `total` slots in the MR.
pub fn placeholder_name(base: &str, occurrence: usize, total: usize) -> String {
    if total > 1 {
        format!("{base}_{}", occurrence + 1)
    } else {
        base.to_string()
    }
}

/// Replace verbalizations of the given attributes' values with placeholder
/// tokens. Values must occur verbatim (case-insensitively; matching runs on
/// the tokenized form) or the call fails with a miss for the first absent
/// attribute. Slots whose values have no surface form (don't care) and
/// binary slots are skipped.
pub fn delexicalize(
    utt: &Utterance,
    mr: &MeaningRepresentation,
    schema: &DomainSchema,
    slots: &HashSet<String>,
) -> Result<(Utterance, DelexMapping)> {
    struct Job {
        attribute: String,
        placeholder: String,
        value: String,
        value_tokens: Vec<String>,
    }

    let mut jobs: Vec<Job> = Vec::new();
    for (attr_name, value) in &mr.slots {
        if !slots.iter().any(|s| s.eq_ignore_ascii_case(attr_name)) {
            continue;
        }
        let attr = schema
            .attribute(attr_name)
            .ok_or_else(|| Error::schema_violation(None, format!("unknown attribute `{attr_name}`")))?;
        if attr.kind == AttributeKind::Binary || value == DONT_CARE {
            continue;
        }
        let total = mr.count_of(attr_name);
        let occurrence = jobs.iter().filter(|j| j.attribute == attr.name).count();
        let placeholder = placeholder_name(&attr.placeholder(), occurrence, total);
        jobs.push(Job {
            attribute: attr.name.clone(),
            placeholder,
            value: value.clone(),
            value_tokens: tokenize(value),
        });
    }

    // Longer values first so a value containing another (e.g. a name that
    // embeds the near landmark) is claimed before its substring.
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(jobs[i].value_tokens.len()));

    let mut tokens = utt.tokens.clone();
    let mut mapping = DelexMapping::default();
    for &i in &order {
        let job = &jobs[i];
        if job.value_tokens.is_empty() {
            continue;
        }
        let mut found = false;
        let mut pos = 0;
        while pos + job.value_tokens.len() <= tokens.len() {
            if tokens[pos..pos + job.value_tokens.len()] == job.value_tokens[..] {
                tokens.splice(pos..pos + job.value_tokens.len(), [job.placeholder.clone()]);
                found = true;
                pos += 1;
            } else {
                pos += 1;
            }
        }
        if !found {
            return Err(Error::DelexMiss { attribute: job.attribute.clone() });
        }
    }
    mapping
        .entries
        .extend(jobs.into_iter().map(|j| (j.placeholder, j.value)));

    Ok((Utterance::from_tokens(tokens), mapping))
}

/// Invert a delexicalization: splice each placeholder's value tokens back in.
pub fn relexicalize(tokens: &[String], mapping: &DelexMapping) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        match mapping.value_for(tok) {
            Some(value) => out.extend(tokenize(value)),
            None => out.push(tok.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::schema::DomainSchema;

    fn schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "t"

            [[acts]]
            name = "inform"

            [[acts]]
            name = "compare"
            allows_repeats = true

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["The Golden Curry", "Satellite Eurus 65", "Tecra Hemera 85"]
            delexicalizable = true

            [[attributes]]
            name = "near"
            token = "near"
            kind = "dictionary"
            values = ["The Six Bells"]
            delexicalizable = true

            [[attributes]]
            name = "weight"
            token = "weight"
            kind = "dictionary"
            values = ["2.3 kg", "4.1 kg"]
            delexicalizable = true

            [[attributes]]
            name = "familyFriendly"
            token = "fam_friend"
            kind = "binary"
            values = ["yes", "no"]
            "#,
        )
        .unwrap()
    }

    fn set(names: &[&str]) -> HashSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn replaces_name_and_near() {
        let schema = schema();
        let mr = MeaningRepresentation::parse(
            "name[The Golden Curry], near[The Six Bells], familyFriendly[yes]",
            &schema,
        )
        .unwrap();
        let utt = Utterance::from_raw(
            "Near The Six Bells is a venue that is children friendly named The Golden Curry.",
        );
        let (delexed, mapping) = delexicalize(&utt, &mr, &schema, &set(&["name", "near"])).unwrap();
        assert_eq!(
            delexed.raw,
            "near NEAR is a venue that is children friendly named NAME ."
        );
        assert_eq!(mapping.value_for("NAME"), Some("The Golden Curry"));
        assert_eq!(mapping.value_for("NEAR"), Some("The Six Bells"));
    }

    #[test]
    fn empty_slot_set_is_a_noop() {
        let schema = schema();
        let mr = MeaningRepresentation::parse("name[The Golden Curry]", &schema).unwrap();
        let utt = Utterance::from_raw("The Golden Curry is nice.");
        let (delexed, mapping) = delexicalize(&utt, &mr, &schema, &set(&[])).unwrap();
        assert_eq!(delexed.tokens, utt.tokens);
        assert!(mapping.is_empty());
    }

    #[test]
    fn relexicalize_inverts_exactly() {
        let schema = schema();
        let mr = MeaningRepresentation::parse(
            "name[The Golden Curry], near[The Six Bells]",
            &schema,
        )
        .unwrap();
        for raw in [
            "Near The Six Bells is a venue named The Golden Curry.",
            "The Golden Curry, near The Six Bells, is a venue. The Golden Curry is good.",
        ] {
            let utt = Utterance::from_raw(raw);
            let (delexed, mapping) = delexicalize(&utt, &mr, &schema, &set(&["name", "near"])).unwrap();
            assert_eq!(relexicalize(&delexed.tokens, &mapping), utt.tokens, "failed on {raw:?}");
        }
    }

    #[test]
    fn repeated_attributes_get_indexed_placeholders() {
        let schema = schema();
        let mr = MeaningRepresentation::parse(
            "compare(name[Satellite Eurus 65], weight[2.3 kg], name[Tecra Hemera 85], weight[4.1 kg])",
            &schema,
        )
        .unwrap();
        let utt = Utterance::from_raw(
            "The Satellite Eurus 65 weighs 2.3 kg while the Tecra Hemera 85 weighs 4.1 kg.",
        );
        let (delexed, mapping) =
            delexicalize(&utt, &mr, &schema, &set(&["name", "weight"])).unwrap();
        assert_eq!(
            delexed.raw,
            "the NAME_1 weighs WEIGHT_1 while the NAME_2 weighs WEIGHT_2 ."
        );
        assert_eq!(mapping.value_for("NAME_2"), Some("Tecra Hemera 85"));
        assert_eq!(relexicalize(&delexed.tokens, &mapping), utt.tokens);
    }

    #[test]
    fn missing_value_is_a_delex_miss() {
        let schema = schema();
        let mr = MeaningRepresentation::parse("name[The Golden Curry], near[The Six Bells]", &schema).unwrap();
        let utt = Utterance::from_raw("The Golden Curry is a venue.");
        let err = delexicalize(&utt, &mr, &schema, &set(&["name", "near"])).unwrap_err();
        match err {
            Error::DelexMiss { attribute } => assert_eq!(attribute, "near"),
            other => panic!("expected delex miss, got {other:?}"),
        }
    }

    #[test]
    fn binary_and_absent_set_attributes_are_skipped() {
        let schema = schema();
        let mr = MeaningRepresentation::parse("name[The Golden Curry], familyFriendly[yes]", &schema).unwrap();
        let utt = Utterance::from_raw("The Golden Curry is family friendly, yes indeed.");
        let (delexed, mapping) =
            delexicalize(&utt, &mr, &schema, &set(&["name", "familyFriendly"])).unwrap();
        assert_eq!(mapping.entries.len(), 1);
        assert!(delexed.tokens.contains(&"NAME".to_string()));
        assert!(delexed.tokens.contains(&"yes".to_string()));
    }
}
