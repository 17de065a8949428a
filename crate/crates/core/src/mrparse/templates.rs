//! Template expansion: deterministic synthetic utterances for MRs, used to
//! build corpora where the intended parse is known by construction.
//!
//! Template file (TOML): one chunk per (attribute, value), `{value}` filled
//! with the value's surface tokens (or the attribute's placeholder in
//! delexicalized mode). `"*"` covers every dictionary value of the
//! attribute; don't-care values always need an explicit entry. Acts may
//! carry an intro chunk so act cues are realized.
//!
//! ```toml
//! [act.inform]
//! intro = ""
//!
//! [attribute.food]
//! "*" = "it serves {value} food"
//!
//! [attribute.familyFriendly]
//! yes = "it is family friendly"
//! no = "it is not family friendly"
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::corpus::linearize::LinMode;
use crate::corpus::mr::MeaningRepresentation;
use crate::corpus::schema::{AttributeKind, DomainSchema, DONT_CARE};
use crate::corpus::tokenizer::tokenize;
use crate::corpus::types::Utterance;
use crate::error::{Error, Result};
use crate::nn::rng::RngStream;

#[derive(Debug, Deserialize)]
struct ActTemplateFile {
    #[serde(default)]
    intro: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[serde(default)]
    act: HashMap<String, ActTemplateFile>,
    attribute: HashMap<String, HashMap<String, String>>,
}

/// Validated template set for one schema.
pub struct TemplateSet {
    act_intros: HashMap<String, String>,
    /// attribute -> value -> chunk; "*" is the catch-all key.
    chunks: HashMap<String, HashMap<String, String>>,
}

impl TemplateSet {
    pub fn load(path: &Path, schema: &DomainSchema) -> Result<TemplateSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, schema)
    }

    pub fn from_toml_str(text: &str, schema: &DomainSchema) -> Result<TemplateSet> {
        let file: TemplateFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("template file: {e}")))?;
        for act in file.act.keys() {
            if schema.act(act).is_none() {
                return Err(Error::Config(format!("template for unknown act `{act}`")));
            }
        }
        let mut chunks = HashMap::new();
        for (attr, values) in &file.attribute {
            let def = schema
                .attribute(attr)
                .ok_or_else(|| Error::Config(format!("template for unknown attribute `{attr}`")))?;
            let has_star = values.contains_key("*");
            for key in values.keys() {
                if key != "*" && def.canonical_value(key).is_none() {
                    return Err(Error::Config(format!(
                        "template for `{attr}` keys unknown value `{key}`"
                    )));
                }
            }
            for v in &def.values {
                if !has_star && !values.keys().any(|k| k.eq_ignore_ascii_case(v)) {
                    return Err(Error::Config(format!(
                        "attribute `{attr}` has no template for value `{v}`"
                    )));
                }
            }
            if def.kind == AttributeKind::DontCare
                && !values.keys().any(|k| k.eq_ignore_ascii_case(DONT_CARE))
            {
                return Err(Error::Config(format!(
                    "attribute `{attr}` needs an explicit template for `{DONT_CARE}`"
                )));
            }
            // Canonicalize keys so lookups hit regardless of file casing.
            let mut canon: HashMap<String, String> = HashMap::new();
            for (key, chunk) in values {
                let ck = if key == "*" {
                    "*".to_string()
                } else {
                    def.canonical_value(key).expect("validated above")
                };
                canon.insert(ck, chunk.clone());
            }
            chunks.insert(def.name.clone(), canon);
        }
        for def in &schema.attributes {
            if !chunks.contains_key(&def.name) {
                return Err(Error::Config(format!("attribute `{}` has no template section", def.name)));
            }
        }
        let act_intros = file.act.into_iter().map(|(k, v)| (k, v.intro)).collect();
        Ok(TemplateSet { act_intros, chunks })
    }

    fn chunk_for(&self, attr: &str, value: &str) -> Option<&str> {
        let values = self.chunks.get(attr)?;
        values.get(value).or_else(|| values.get("*")).map(|s| s.as_str())
    }
}

/// Expand an MR into a deterministic synthetic utterance: the act intro (if
/// any), then one chunk per slot in canonical order, each chunk closed with
/// a period. Repeated attributes are not supported.
pub fn expand(
    mr: &MeaningRepresentation,
    schema: &DomainSchema,
    set: &TemplateSet,
    mode: LinMode,
) -> Result<Utterance> {
    for i in 0..mr.slots.len() {
        for j in i + 1..mr.slots.len() {
            if mr.slots[i].0 == mr.slots[j].0 {
                return Err(Error::Invalid(format!(
                    "template expansion does not support repeated attribute `{}`",
                    mr.slots[i].0
                )));
            }
        }
    }
    let delex = mode == LinMode::E2eDelex;
    let mut tokens: Vec<String> = Vec::new();
    if let Some(intro) = set.act_intros.get(&mr.act) {
        if !intro.is_empty() {
            tokens.extend(tokenize(intro));
            tokens.push(".".to_string());
        }
    }
    for (attr, value) in &mr.slots {
        let def = schema
            .attribute(attr)
            .ok_or_else(|| Error::Invalid(format!("unknown attribute `{attr}`")))?;
        let chunk = set
            .chunk_for(&def.name, value)
            .ok_or_else(|| Error::Invalid(format!("no template for `{attr}`[{value}]")))?;
        let as_placeholder = delex
            && def.delexicalizable
            && def.kind != AttributeKind::Binary
            && value != DONT_CARE;
        for tok in tokenize(chunk) {
            if tok == "{value}" {
                if as_placeholder {
                    tokens.push(def.placeholder());
                } else {
                    tokens.extend(tokenize(value));
                }
            } else {
                tokens.push(tok);
            }
        }
        tokens.push(".".to_string());
    }
    if tokens.is_empty() {
        return Err(Error::Invalid("MR with no slots expands to nothing".into()));
    }
    Ok(Utterance::from_tokens(tokens))
}

/// Exhaustive single-value coverage corpus: for every act and every
/// (attribute, value) pair (don't-care included where legal), one MR holding
/// the act's required attributes plus that pair.
pub fn value_coverage_corpus(
    schema: &DomainSchema,
    set: &TemplateSet,
    mode: LinMode,
) -> Result<Vec<(MeaningRepresentation, Utterance)>> {
    let mut out = Vec::new();
    for act in &schema.acts {
        let required = schema.required_for_act(&act.name);
        for def in &schema.attributes {
            let mut values: Vec<String> = def.values.clone();
            if def.kind == AttributeKind::DontCare {
                values.push(DONT_CARE.to_string());
            }
            for value in values {
                let mut slots: Vec<(String, String)> = Vec::new();
                for req in &required {
                    if req.eq_ignore_ascii_case(&def.name) {
                        continue;
                    }
                    let req_def = schema.attribute(req).expect("schema-validated");
                    slots.push((req_def.name.clone(), req_def.values[0].clone()));
                }
                slots.push((def.name.clone(), value.clone()));
                let mut mr = MeaningRepresentation::new(act.name.clone(), slots);
                mr.validate_and_canonicalize(schema, None)?;
                let utt = expand(&mr, schema, set, mode)?;
                out.push((mr, utt));
            }
        }
    }
    Ok(out)
}

/// Random multi-attribute corpus: `per_size` MRs per requested size, each
/// holding the act's required attributes plus uniformly drawn extras with
/// uniformly drawn values. Acts cycle round-robin. Sizes must be achievable
/// (required count ≤ S ≤ attribute count).
pub fn combinatorial_corpus(
    schema: &DomainSchema,
    set: &TemplateSet,
    mode: LinMode,
    sizes: &[usize],
    per_size: usize,
    rng: &mut RngStream,
) -> Result<Vec<(MeaningRepresentation, Utterance)>> {
    let mut out = Vec::new();
    let n_attrs = schema.attributes.len();
    for (i, &size) in sizes.iter().enumerate() {
        let act = &schema.acts[i % schema.acts.len()];
        let required = schema.required_for_act(&act.name);
        if size < required.len().max(1) || size > n_attrs {
            return Err(Error::Config(format!(
                "size {size} unachievable for act `{}` ({} required, {n_attrs} attributes)",
                act.name,
                required.len()
            )));
        }
        for _ in 0..per_size {
            let mut chosen: Vec<usize> = required
                .iter()
                .map(|r| schema.attribute_index(r).expect("schema-validated"))
                .collect();
            let mut pool: Vec<usize> =
                (0..n_attrs).filter(|i| !chosen.contains(i)).collect();
            rng.shuffle(&mut pool);
            chosen.extend(pool.into_iter().take(size - chosen.len()));
            chosen.sort_unstable();

            let mut slots = Vec::with_capacity(size);
            for idx in chosen {
                let def = &schema.attributes[idx];
                let mut values: Vec<&str> = def.values.iter().map(|s| s.as_str()).collect();
                if def.kind == AttributeKind::DontCare {
                    values.push(DONT_CARE);
                }
                let value = values[rng.index(values.len())];
                slots.push((def.name.clone(), value.to_string()));
            }
            let mut mr = MeaningRepresentation::new(act.name.clone(), slots);
            mr.validate_and_canonicalize(schema, None)?;
            let utt = expand(&mr, schema, set, mode)?;
            out.push((mr, utt));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrparse::rulepack::{rule_parse, RulePack};

    fn schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "mini"
            required_attributes = ["name"]

            [[acts]]
            name = "inform"

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["The Punter", "The Mill"]
            delexicalizable = true

            [[attributes]]
            name = "food"
            token = "food"
            kind = "dictionary"
            values = ["Italian", "French"]

            [[attributes]]
            name = "familyFriendly"
            token = "fam_friend"
            kind = "binary"
            values = ["yes", "no"]

            [[attributes]]
            name = "priceRange"
            token = "price_range"
            kind = "dontcare"
            values = ["cheap", "less than £20"]
            "#,
        )
        .unwrap()
    }

    fn templates(schema: &DomainSchema) -> TemplateSet {
        TemplateSet::from_toml_str(
            r#"
            [attribute.name]
            "*" = "{value} is here"

            [attribute.food]
            "*" = "it serves {value} food"

            [attribute.familyFriendly]
            yes = "it is family friendly"
            no = "it is not family friendly"

            [attribute.priceRange]
            "*" = "prices are {value}"
            "don't care" = "any price is fine"
            "#,
            schema,
        )
        .unwrap()
    }

    fn pack(schema: &DomainSchema) -> RulePack {
        RulePack::from_str(
            r#"
            [attribute name]
            /@value is here/ => @value

            [attribute food]
            /serves @value food/ => @value

            [attribute familyFriendly]
            /is not family friendly/ => no
            /is family friendly/ => yes

            [attribute priceRange]
            /prices are @value/ => @value
            /any price is fine/ => don't care
            "#,
            schema,
        )
        .unwrap()
    }

    #[test]
    fn expansion_is_deterministic_and_tokenized() {
        let schema = schema();
        let set = templates(&schema);
        let mr = MeaningRepresentation::parse(
            "inform(name[The Punter], food[Italian], familyFriendly[no])",
            &schema,
        )
        .unwrap();
        let a = expand(&mr, &schema, &set, LinMode::E2eLex).unwrap();
        let b = expand(&mr, &schema, &set, LinMode::E2eLex).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.raw,
            "the punter is here . it serves italian food . it is not family friendly ."
        );
    }

    #[test]
    fn delex_mode_uses_placeholders() {
        let schema = schema();
        let set = templates(&schema);
        let mr =
            MeaningRepresentation::parse("inform(name[The Mill], food[French])", &schema).unwrap();
        let utt = expand(&mr, &schema, &set, LinMode::E2eDelex).unwrap();
        assert!(utt.tokens.contains(&"NAME".to_string()));
        assert!(!utt.raw.contains("mill"));
    }

    #[test]
    fn every_value_coverage_utterance_parses_back_exactly() {
        // The template corpus is the precision/recall fixture: the rules must
        // recover each source MR exactly, for both surface modes.
        let schema = schema();
        let set = templates(&schema);
        let pack = pack(&schema);
        for mode in [LinMode::E2eLex, LinMode::E2eDelex] {
            let corpus = value_coverage_corpus(&schema, &set, mode).unwrap();
            assert!(!corpus.is_empty());
            for (mr, utt) in &corpus {
                let out = rule_parse(utt, &pack, &schema);
                assert!(out.valid, "mode {mode:?} utt `{}` reasons {:?}", utt.raw, out.reasons);
                let parsed = out.mr.unwrap();
                // In delex mode the name slot comes back as the placeholder.
                let expected = if mode == LinMode::E2eDelex {
                    mr.with_placeholders(&schema)
                } else {
                    mr.clone()
                };
                assert_eq!(
                    parsed.canonical_string(&schema),
                    expected.canonical_string(&schema),
                    "mode {mode:?} utt `{}`",
                    utt.raw
                );
            }
        }
    }

    #[test]
    fn combinatorial_corpus_parses_back_exactly() {
        let schema = schema();
        let set = templates(&schema);
        let pack = pack(&schema);
        let mut rng = RngStream::new(11, 0);
        let corpus =
            combinatorial_corpus(&schema, &set, LinMode::E2eLex, &[2, 3, 4], 25, &mut rng).unwrap();
        assert_eq!(corpus.len(), 75);
        for (mr, utt) in &corpus {
            let out = rule_parse(utt, &pack, &schema);
            assert!(out.valid, "utt `{}` reasons {:?}", utt.raw, out.reasons);
            assert_eq!(
                out.mr.unwrap().canonical_string(&schema),
                mr.canonical_string(&schema)
            );
        }
    }

    #[test]
    fn combinatorial_corpus_is_reproducible() {
        let schema = schema();
        let set = templates(&schema);
        let mut r1 = RngStream::new(7, 2);
        let mut r2 = RngStream::new(7, 2);
        let a = combinatorial_corpus(&schema, &set, LinMode::E2eLex, &[3], 10, &mut r1).unwrap();
        let b = combinatorial_corpus(&schema, &set, LinMode::E2eLex, &[3], 10, &mut r2).unwrap();
        let sa: Vec<String> = a.iter().map(|(m, u)| format!("{}|{}", m.canonical_string(&schema), u.raw)).collect();
        let sb: Vec<String> = b.iter().map(|(m, u)| format!("{}|{}", m.canonical_string(&schema), u.raw)).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn template_validation_rejects_gaps() {
        let schema = schema();
        // Missing familyFriendly=no entry.
        let missing_value = r#"
            [attribute.name]
            "*" = "{value}"
            [attribute.food]
            "*" = "{value}"
            [attribute.familyFriendly]
            yes = "friendly"
            [attribute.priceRange]
            "*" = "{value}"
            "don't care" = "any price"
        "#;
        assert!(TemplateSet::from_toml_str(missing_value, &schema).is_err());
        // Missing don't-care entry.
        let missing_dontcare = r#"
            [attribute.name]
            "*" = "{value}"
            [attribute.food]
            "*" = "{value}"
            [attribute.familyFriendly]
            yes = "friendly"
            no = "not friendly"
            [attribute.priceRange]
            "*" = "{value}"
        "#;
        assert!(TemplateSet::from_toml_str(missing_dontcare, &schema).is_err());
        // Missing whole attribute section.
        let missing_attr = r#"
            [attribute.name]
            "*" = "{value}"
            [attribute.food]
            "*" = "{value}"
            [attribute.familyFriendly]
            yes = "friendly"
            no = "not friendly"
        "#;
        assert!(TemplateSet::from_toml_str(missing_attr, &schema).is_err());
        // Unknown value key.
        let unknown_value = r#"
            [attribute.name]
            "*" = "{value}"
            [attribute.food]
            "*" = "{value}"
            sushi = "serves sushi"
            [attribute.familyFriendly]
            yes = "friendly"
            no = "not friendly"
            [attribute.priceRange]
            "*" = "{value}"
            "don't care" = "any price"
        "#;
        assert!(TemplateSet::from_toml_str(unknown_value, &schema).is_err());
    }

    #[test]
    fn repeated_attributes_are_rejected() {
        let schema = DomainSchema::from_toml_str(
            r#"
            name = "cmp"
            [[acts]]
            name = "compare"
            allows_repeats = true
            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["a", "b"]
            "#,
        )
        .unwrap();
        let set = TemplateSet::from_toml_str(
            "[attribute.name]\n\"*\" = \"{value}\"\n",
            &schema,
        )
        .unwrap();
        let mr = MeaningRepresentation::parse("compare(name[a], name[b])", &schema).unwrap();
        assert!(expand(&mr, &schema, &set, LinMode::E2eLex).is_err());
    }

    #[test]
    fn act_intro_is_emitted() {
        let schema = DomainSchema::from_toml_str(
            r#"
            name = "da"
            [[acts]]
            name = "recommend"
            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["alpha"]
            "#,
        )
        .unwrap();
        let set = TemplateSet::from_toml_str(
            r#"
            [act.recommend]
            intro = "we recommend this"
            [attribute.name]
            "*" = "{value} fits you"
            "#,
            &schema,
        )
        .unwrap();
        let mr = MeaningRepresentation::parse("recommend(name[alpha])", &schema).unwrap();
        let utt = expand(&mr, &schema, &set, LinMode::E2eLex).unwrap();
        assert_eq!(utt.raw, "we recommend this . alpha fits you .");
    }
}
