//! Meaning representations: a dialogue act plus ordered (attribute, value)
//! slots, with parsing from and serialization to the `attr[value]` string
//! syntax.

use serde::{Deserialize, Serialize};

use super::schema::{AttributeKind, DomainSchema, DONT_CARE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeaningRepresentation {
    pub act: String,
    /// Ordered (attribute, value) pairs, attribute names in canonical casing.
    pub slots: Vec<(String, String)>,
}

impl MeaningRepresentation {
    pub fn new(act: impl Into<String>, slots: Vec<(String, String)>) -> Self {
        MeaningRepresentation { act: act.into(), slots }
    }

    /// Parse an MR string. Two forms are accepted: `act(attr[value], …)` and
    /// the bare `attr[value], …` form, which implies the `inform` act. Act
    /// names are normalized to lowercase snake case (`InformCount` and
    /// `inform_count` are the same act). The result is validated against the
    /// schema and canonicalized to schema attribute order.
    pub fn parse(s: &str, schema: &DomainSchema) -> Result<Self> {
        Self::parse_at(s, schema, None)
    }

    /// Like [`parse`](Self::parse), tagging errors with a source line number.
    pub fn parse_at(s: &str, schema: &DomainSchema, line: Option<u64>) -> Result<Self> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(Error::mr_syntax(line, "empty MR string"));
        }
        let (act, body) = match split_act_form(trimmed) {
            Some((act, body)) => (normalize_act(act), body),
            None => ("inform".to_string(), trimmed),
        };
        let mut slots = Vec::new();
        for part in split_top_level(body) {
            let part = part.trim();
            if part.is_empty() {
                return Err(Error::mr_syntax(line, format!("empty slot in `{trimmed}`")));
            }
            let open = part
                .find('[')
                .ok_or_else(|| Error::mr_syntax(line, format!("missing `[` in slot `{part}`")))?;
            if !part.ends_with(']') {
                return Err(Error::mr_syntax(line, format!("missing `]` in slot `{part}`")));
            }
            let attr = part[..open].trim();
            let value = &part[open + 1..part.len() - 1];
            if attr.is_empty() {
                return Err(Error::mr_syntax(line, format!("missing attribute name in `{part}`")));
            }
            slots.push((attr.to_string(), value.to_string()));
        }
        let mut mr = MeaningRepresentation::new(act, slots);
        mr.validate_and_canonicalize(schema, line)?;
        Ok(mr)
    }

    /// Resolve attribute and value casing against the schema, check act and
    /// slot legality, and order slots canonically.
    pub fn validate_and_canonicalize(&mut self, schema: &DomainSchema, line: Option<u64>) -> Result<()> {
        if schema.act(&self.act).is_none() {
            return Err(Error::schema_violation(
                line,
                format!("unknown dialogue act `{}` in schema `{}`", self.act, schema.name),
            ));
        }
        for (attr, value) in &mut self.slots {
            let def = schema.attribute(attr).ok_or_else(|| {
                Error::schema_violation(line, format!("unknown attribute `{attr}` in schema `{}`", schema.name))
            })?;
            let canon = def.canonical_value(value).ok_or_else(|| {
                Error::schema_violation(line, format!("value `{value}` not in vocabulary of `{}`", def.name))
            })?;
            *attr = def.name.clone();
            *value = canon;
        }
        let allows_repeats = schema.act(&self.act).map(|a| a.allows_repeats).unwrap_or(false);
        if !allows_repeats {
            for i in 0..self.slots.len() {
                for j in i + 1..self.slots.len() {
                    if self.slots[i].0 == self.slots[j].0 {
                        return Err(Error::schema_violation(
                            line,
                            format!("attribute `{}` repeated under act `{}`", self.slots[i].0, self.act),
                        ));
                    }
                }
            }
        }
        for required in schema.required_for_act(&self.act) {
            if !self.slots.iter().any(|(a, _)| a.eq_ignore_ascii_case(required)) {
                return Err(Error::schema_violation(
                    line,
                    format!("required attribute `{required}` missing"),
                ));
            }
        }
        self.canonicalize(schema);
        Ok(())
    }

    /// Stable-sort slots into schema attribute order; repeated attributes
    /// keep their relative order.
    pub fn canonicalize(&mut self, schema: &DomainSchema) {
        self.slots
            .sort_by_key(|(attr, _)| schema.attribute_index(attr).unwrap_or(usize::MAX));
    }

    pub fn value_of(&self, attr: &str) -> Option<&str> {
        self.slots
            .iter()
            .find(|(a, _)| a.eq_ignore_ascii_case(attr))
            .map(|(_, v)| v.as_str())
    }

    pub fn has_attribute(&self, attr: &str) -> bool {
        self.value_of(attr).is_some()
    }

    /// All values filling `attr`, in slot order (repeats possible under acts
    /// that allow them).
    pub fn values_of<'a>(&'a self, attr: &str) -> Vec<&'a str> {
        self.slots
            .iter()
            .filter(|(a, _)| a.eq_ignore_ascii_case(attr))
            .map(|(_, v)| v.as_str())
            .collect()
    }

    /// How many slots `attr` fills.
    pub fn count_of(&self, attr: &str) -> usize {
        self.slots.iter().filter(|(a, _)| a.eq_ignore_ascii_case(attr)).count()
    }

    fn slot_body(&self, schema: &DomainSchema) -> String {
        let mut ordered = self.clone();
        ordered.canonicalize(schema);
        ordered
            .slots
            .iter()
            .map(|(a, v)| format!("{a}[{v}]"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Canonical string form: `act(attr[value], …)` in schema attribute order.
    pub fn canonical_string(&self, schema: &DomainSchema) -> String {
        format!("{}({})", self.act, self.slot_body(schema))
    }

    /// Bare slot-list form used by the E2E corpus files; the act is implied.
    pub fn bare_string(&self, schema: &DomainSchema) -> String {
        self.slot_body(schema)
    }

    /// Copy with every delexicalizable slot value replaced by the attribute
    /// placeholder, matching what a delexicalized utterance can assert.
    /// Mirrors the surface transform: repeated attributes get indexed
    /// placeholders; binary and don't-care slots keep their values.
    pub fn with_placeholders(&self, schema: &DomainSchema) -> Self {
        let mut out = self.clone();
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (attr, value) in &mut out.slots {
            let Some(def) = schema.attribute(attr) else { continue };
            if !def.delexicalizable
                || def.kind == AttributeKind::Binary
                || value.as_str() == DONT_CARE
            {
                continue;
            }
            let total = self.count_of(attr);
            let occurrence = match seen.iter_mut().find(|(a, _)| a == attr) {
                Some((_, n)) => {
                    *n += 1;
                    *n - 1
                }
                None => {
                    seen.push((attr.clone(), 1));
                    0
                }
            };
            *value = super::delex::placeholder_name(&def.placeholder(), occurrence, total);
        }
        out
    }
}

/// Split `act(body)` into its parts, or return None for the bare form.
fn split_act_form(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    if !s.ends_with(')') {
        return None;
    }
    let head = s[..open].trim();
    if head.is_empty() || !head.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    // A `[` before the `(` means the parenthesis is inside a slot value.
    if s[..open].contains('[') {
        return None;
    }
    Some((head, &s[open + 1..s.len() - 1]))
}

/// Split on commas that sit outside `[…]` brackets.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < s.len() || !parts.is_empty() || !s.trim().is_empty() {
        parts.push(&s[start..]);
    }
    parts
}

/// Normalize an act name to lowercase snake case: `InformCount` becomes
/// `inform_count`; names already in snake case pass through.
pub fn normalize_act(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 && !out.ends_with('_') {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::schema::DomainSchema;

    fn e2e_like_schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "e2e"
            required_attributes = ["name"]

            [[acts]]
            name = "inform"

            [[attributes]]
            name = "eatType"
            token = "eat_type"
            kind = "dictionary"
            values = ["coffee shop", "pub", "restaurant"]

            [[attributes]]
            name = "near"
            token = "near"
            kind = "dictionary"
            values = ["The Six Bells", "Avalon"]
            delexicalizable = true

            [[attributes]]
            name = "familyFriendly"
            token = "fam_friend"
            kind = "binary"
            values = ["yes", "no"]

            [[attributes]]
            name = "food"
            token = "food"
            kind = "dictionary"
            values = ["Italian", "Fast food"]

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["The Golden Curry", "The Mill"]
            delexicalizable = true
            "#,
        )
        .unwrap()
    }

    fn compare_schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "laptops"

            [[acts]]
            name = "inform"

            [[acts]]
            name = "compare"
            allows_repeats = true

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["Satellite Eurus 65", "Tecra Hemera 85"]
            delexicalizable = true

            [[attributes]]
            name = "weight"
            token = "weight"
            kind = "dictionary"
            values = ["2.3 kg", "4.1 kg"]
            delexicalizable = true
            "#,
        )
        .unwrap()
    }

    #[test]
    fn parses_bare_form_as_inform() {
        let schema = e2e_like_schema();
        let mr = MeaningRepresentation::parse(
            "name[The Golden Curry], near[The Six Bells], familyFriendly[yes]",
            &schema,
        )
        .unwrap();
        assert_eq!(mr.act, "inform");
        assert_eq!(mr.value_of("name"), Some("The Golden Curry"));
        assert_eq!(mr.value_of("near"), Some("The Six Bells"));
        assert_eq!(mr.value_of("familyFriendly"), Some("yes"));
    }

    #[test]
    fn canonical_order_puts_name_last() {
        let schema = e2e_like_schema();
        let mr = MeaningRepresentation::parse("name[The Mill], food[Italian], near[Avalon]", &schema).unwrap();
        let attrs: Vec<&str> = mr.slots.iter().map(|(a, _)| a.as_str()).collect();
        assert_eq!(attrs, vec!["near", "food", "name"]);
        assert_eq!(mr.bare_string(&schema), "near[Avalon], food[Italian], name[The Mill]");
        assert_eq!(
            mr.canonical_string(&schema),
            "inform(near[Avalon], food[Italian], name[The Mill])"
        );
    }

    #[test]
    fn serialize_after_parse_is_identity_on_canonical_strings() {
        let schema = e2e_like_schema();
        for s in [
            "eatType[pub], name[The Mill]",
            "near[Avalon], familyFriendly[no], name[The Golden Curry]",
            "eatType[coffee shop], food[Fast food], name[The Mill]",
        ] {
            let mr = MeaningRepresentation::parse(s, &schema).unwrap();
            assert_eq!(mr.bare_string(&schema), s);
            let rt = MeaningRepresentation::parse(&mr.canonical_string(&schema), &schema).unwrap();
            assert_eq!(rt.canonical_string(&schema), mr.canonical_string(&schema));
        }
    }

    #[test]
    fn act_form_and_camel_case_normalization() {
        let schema = compare_schema();
        let mr = MeaningRepresentation::parse("Compare(name[Satellite Eurus 65], name[Tecra Hemera 85])", &schema)
            .unwrap();
        assert_eq!(mr.act, "compare");
        assert_eq!(mr.count_of("name"), 2);
        assert_eq!(
            mr.values_of("name"),
            vec!["Satellite Eurus 65", "Tecra Hemera 85"]
        );
    }

    #[test]
    fn repeats_rejected_unless_act_allows() {
        let schema = compare_schema();
        let err = MeaningRepresentation::parse("inform(name[Satellite Eurus 65], name[Tecra Hemera 85])", &schema);
        assert!(err.is_err());
    }

    #[test]
    fn unknown_attribute_and_value_are_schema_violations() {
        let schema = e2e_like_schema();
        assert!(matches!(
            MeaningRepresentation::parse("bogus[pub], name[The Mill]", &schema),
            Err(Error::SchemaViolation { .. })
        ));
        assert!(matches!(
            MeaningRepresentation::parse("eatType[castle], name[The Mill]", &schema),
            Err(Error::SchemaViolation { .. })
        ));
    }

    #[test]
    fn missing_required_attribute_rejected() {
        let schema = e2e_like_schema();
        assert!(MeaningRepresentation::parse("eatType[pub]", &schema).is_err());
    }

    #[test]
    fn malformed_slots_are_syntax_errors() {
        let schema = e2e_like_schema();
        for bad in ["name[The Mill", "name The Mill]", "name[The Mill], , eatType[pub]"] {
            assert!(matches!(
                MeaningRepresentation::parse(bad, &schema),
                Err(Error::MrSyntax { .. })
            ), "expected syntax error for {bad:?}");
        }
    }

    #[test]
    fn case_insensitive_value_resolution() {
        let schema = e2e_like_schema();
        let mr = MeaningRepresentation::parse("name[the mill], food[italian]", &schema).unwrap();
        assert_eq!(mr.value_of("name"), Some("The Mill"));
        assert_eq!(mr.value_of("food"), Some("Italian"));
    }

    #[test]
    fn normalize_act_cases() {
        assert_eq!(normalize_act("InformCount"), "inform_count");
        assert_eq!(normalize_act("inform_count"), "inform_count");
        assert_eq!(normalize_act("compare"), "compare");
        assert_eq!(normalize_act("InformOnlyMatch"), "inform_only_match");
    }

    #[test]
    fn repeated_attribute_counts() {
        let schema = compare_schema();
        let mr = MeaningRepresentation::parse(
            "compare(name[Satellite Eurus 65], weight[2.3 kg], name[Tecra Hemera 85], weight[4.1 kg])",
            &schema,
        )
        .unwrap();
        // Canonical order groups attributes, occurrence order preserved.
        assert_eq!(
            mr.bare_string(&schema),
            "name[Satellite Eurus 65], name[Tecra Hemera 85], weight[2.3 kg], weight[4.1 kg]"
        );
    }
}
