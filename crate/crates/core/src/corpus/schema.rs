//! Domain schemas: dialogue acts plus ordered attribute definitions with
//! closed value vocabularies.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The value string used for don't-care slots.
pub const DONT_CARE: &str = "don't care";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    /// Closed dictionary of values.
    Dictionary,
    /// Exactly the values yes and no.
    Binary,
    /// Dictionary that additionally accepts the don't-care value.
    #[serde(rename = "dontcare")]
    DontCare,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeDef {
    /// Canonical attribute name as it appears in MR strings, e.g. `eatType`.
    pub name: String,
    /// Base symbol used when building input tokens, e.g. `eat_type`.
    pub token: String,
    pub kind: AttributeKind,
    /// Closed value vocabulary in canonical casing.
    #[serde(default)]
    pub values: Vec<String>,
    /// Whether surface verbalizations of this attribute's values are replaced
    /// by placeholders in delexicalized pipelines.
    #[serde(default)]
    pub delexicalizable: bool,
}

impl AttributeDef {
    /// Uppercased placeholder base for this attribute, e.g. `NAME`.
    pub fn placeholder(&self) -> String {
        self.token.to_uppercase()
    }

    /// True if `value` is this attribute's placeholder, optionally with a
    /// `_<k>` occurrence suffix (`NAME`, `WEIGHT_2`).
    pub fn is_placeholder_value(&self, value: &str) -> bool {
        let base = self.placeholder();
        if value == base {
            return true;
        }
        match value.strip_prefix(&base) {
            Some(rest) => {
                rest.strip_prefix('_').is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
            }
            None => false,
        }
    }

    /// Resolve `raw` to this attribute's canonical value casing. Accepts the
    /// don't-care spellings for don't-care-capable attributes and placeholder
    /// values for delexicalizable ones.
    pub fn canonical_value(&self, raw: &str) -> Option<String> {
        let trimmed = raw.trim();
        if self.kind == AttributeKind::DontCare {
            let folded = trimmed.to_lowercase();
            if folded == DONT_CARE || folded == "dontcare" || folded == "dont care" {
                return Some(DONT_CARE.to_string());
            }
        }
        if self.delexicalizable && self.is_placeholder_value(trimmed) {
            return Some(trimmed.to_string());
        }
        self.values
            .iter()
            .find(|v| v.eq_ignore_ascii_case(trimmed))
            .cloned()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActDef {
    pub name: String,
    /// Whether an attribute may fill more than one slot under this act.
    #[serde(default)]
    pub allows_repeats: bool,
    /// Attributes every MR with this act must carry, on top of the
    /// domain-wide required set.
    #[serde(default)]
    pub required_attributes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSchema {
    pub name: String,
    pub acts: Vec<ActDef>,
    pub attributes: Vec<AttributeDef>,
    /// Attributes that must appear on every MR in this domain.
    #[serde(default)]
    pub required_attributes: Vec<String>,
    /// Attribute layout for slot-error reports; defaults to attribute order.
    #[serde(default)]
    pub report_order: Vec<String>,
}

impl DomainSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: DomainSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.acts.is_empty() {
            return Err(Error::InvalidSchema("schema has no dialogue acts".into()));
        }
        let mut seen_acts = HashMap::new();
        for act in &self.acts {
            if seen_acts.insert(act.name.clone(), ()).is_some() {
                return Err(Error::InvalidSchema(format!("duplicate act `{}`", act.name)));
            }
        }
        let mut seen = HashMap::new();
        for attr in &self.attributes {
            if seen.insert(attr.name.to_lowercase(), ()).is_some() {
                return Err(Error::InvalidSchema(format!("duplicate attribute `{}`", attr.name)));
            }
            match attr.kind {
                AttributeKind::Binary => {
                    let ok = attr.values.len() == 2
                        && attr.values.iter().any(|v| v == "yes")
                        && attr.values.iter().any(|v| v == "no");
                    if !ok {
                        return Err(Error::InvalidSchema(format!(
                            "binary attribute `{}` must have values yes and no",
                            attr.name
                        )));
                    }
                }
                AttributeKind::Dictionary | AttributeKind::DontCare => {
                    if attr.values.is_empty() {
                        return Err(Error::InvalidSchema(format!(
                            "attribute `{}` has an empty value vocabulary",
                            attr.name
                        )));
                    }
                }
            }
            if attr.token.is_empty() {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` has an empty token base",
                    attr.name
                )));
            }
        }
        let act_required = self.acts.iter().flat_map(|a| &a.required_attributes);
        for name in self.required_attributes.iter().chain(&self.report_order).chain(act_required) {
            if self.attribute(name).is_none() {
                return Err(Error::InvalidSchema(format!("unknown attribute `{name}` referenced")));
            }
        }
        Ok(())
    }

    /// Attribute lookup, case-insensitive on the name.
    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name.eq_ignore_ascii_case(name))
    }

    /// Position of an attribute in the canonical order.
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name.eq_ignore_ascii_case(name))
    }

    pub fn act(&self, name: &str) -> Option<&ActDef> {
        self.acts.iter().find(|a| a.name == name)
    }

    pub fn is_required(&self, name: &str) -> bool {
        self.required_attributes.iter().any(|r| r.eq_ignore_ascii_case(name))
    }

    /// Attributes an MR with the given act must carry: the domain-wide
    /// required set plus the act's own, deduplicated in that order.
    pub fn required_for_act(&self, act: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self.required_attributes.iter().map(|s| s.as_str()).collect();
        if let Some(def) = self.act(act) {
            for name in &def.required_attributes {
                if !out.iter().any(|r| r.eq_ignore_ascii_case(name)) {
                    out.push(name);
                }
            }
        }
        out
    }

    /// Attribute order used for slot-error reports.
    pub fn report_order(&self) -> Vec<&str> {
        if self.report_order.is_empty() {
            self.attributes.iter().map(|a| a.name.as_str()).collect()
        } else {
            self.report_order.iter().map(|s| s.as_str()).collect()
        }
    }
}

/// Fold a value string into a token fragment: lowercase, spaces to
/// underscores, apostrophes dropped. `The Mill` becomes `the_mill`,
/// `don't care` becomes `dont_care`.
pub fn value_slug(value: &str) -> String {
    value
        .to_lowercase()
        .chars()
        .filter(|c| *c != '\'')
        .map(|c| if c == ' ' { '_' } else { c })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "tiny"
            required_attributes = ["name"]

            [[acts]]
            name = "inform"

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["The Mill", "The Punter"]
            delexicalizable = true

            [[attributes]]
            name = "familyFriendly"
            token = "fam_friend"
            kind = "binary"
            values = ["yes", "no"]

            [[attributes]]
            name = "family"
            token = "family"
            kind = "dontcare"
            values = ["satellite", "tecra"]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn value_lookup_is_case_insensitive() {
        let s = tiny_schema();
        let name = s.attribute("NAME").unwrap();
        assert_eq!(name.canonical_value("the mill").as_deref(), Some("The Mill"));
        assert_eq!(name.canonical_value("The Punter").as_deref(), Some("The Punter"));
        assert_eq!(name.canonical_value("unknown"), None);
    }

    #[test]
    fn dontcare_spellings_fold() {
        let s = tiny_schema();
        let fam = s.attribute("family").unwrap();
        assert_eq!(fam.canonical_value("dontcare").as_deref(), Some(DONT_CARE));
        assert_eq!(fam.canonical_value("Don't Care").as_deref(), Some(DONT_CARE));
        assert_eq!(fam.canonical_value("satellite").as_deref(), Some("satellite"));
        // Binary attributes do not accept don't care.
        let ff = s.attribute("familyFriendly").unwrap();
        assert_eq!(ff.canonical_value("dontcare"), None);
    }

    #[test]
    fn placeholders_accepted_for_delexicalizable_attributes() {
        let s = tiny_schema();
        let name = s.attribute("name").unwrap();
        assert!(name.is_placeholder_value("NAME"));
        assert!(name.is_placeholder_value("NAME_2"));
        assert!(!name.is_placeholder_value("NAME_"));
        assert!(!name.is_placeholder_value("NEAR"));
        assert_eq!(name.canonical_value("NAME").as_deref(), Some("NAME"));
        let fam = s.attribute("family").unwrap();
        assert_eq!(fam.canonical_value("FAMILY"), None, "non-delexicalizable attr");
    }

    #[test]
    fn binary_values_are_validated() {
        let bad = r#"
            name = "bad"
            [[acts]]
            name = "inform"
            [[attributes]]
            name = "flag"
            token = "flag"
            kind = "binary"
            values = ["yes"]
        "#;
        assert!(DomainSchema::from_toml_str(bad).is_err());
    }

    #[test]
    fn value_slug_examples() {
        assert_eq!(value_slug("The Mill"), "the_mill");
        assert_eq!(value_slug("don't care"), "dont_care");
        assert_eq!(value_slug("less than £20"), "less_than_£20");
        assert_eq!(value_slug("5 out of 5"), "5_out_of_5");
    }

    #[test]
    fn per_act_required_attributes_extend_the_global_set() {
        let schema = DomainSchema::from_toml_str(
            r#"
            name = "da"

            [[acts]]
            name = "inform"
            required_attributes = ["name"]

            [[acts]]
            name = "inform_count"
            required_attributes = ["count"]

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["x"]
            delexicalizable = true

            [[attributes]]
            name = "count"
            token = "count"
            kind = "dictionary"
            values = ["1", "2"]
            "#,
        )
        .unwrap();
        assert_eq!(schema.required_for_act("inform"), vec!["name"]);
        assert_eq!(schema.required_for_act("inform_count"), vec!["count"]);
        assert!(schema.required_for_act("unknown").is_empty());

        let bad = r#"
            name = "da"
            [[acts]]
            name = "inform"
            required_attributes = ["missing"]
            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["x"]
        "#;
        assert!(DomainSchema::from_toml_str(bad).is_err());
    }
}
