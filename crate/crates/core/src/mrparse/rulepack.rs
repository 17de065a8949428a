//! Rule packs: surface-pattern rules that recover MR slots from utterances.
//!
//! Pack file format, one directive per line:
//!
//! ```text
//! # comment (blank lines also ignored)
//! [attribute food]
//! /serves @value food/ => @value     # one rule per schema value; @value in
//!                                    # the pattern is the value's tokenized,
//!                                    # escaped surface form
//! /sushi/ => Japanese                # literal pattern, fixed value
//!
//! [act recommend]
//! /would suit|we recommend/          # act cue, no value part
//! ```
//!
//! Patterns are regular expressions matched against the lowercased token
//! stream joined by single spaces, anchored to token boundaries on both
//! sides. Delexicalizable attributes are additionally detected by
//! placeholder-token presence (`NAME`, `NAME_1`, ...), with the placeholder
//! itself as the recovered value.

use std::path::Path;

use regex::Regex;

use crate::corpus::mr::MeaningRepresentation;
use crate::corpus::schema::DomainSchema;
use crate::corpus::tokenizer::tokenize;
use crate::corpus::types::Utterance;
use crate::error::{Error, Result};

struct Rule {
    pattern: Regex,
    value: String,
}

struct AttributeRules {
    attribute: String,
    rules: Vec<Rule>,
}

struct ActCues {
    act: String,
    cues: Vec<Regex>,
}

/// Compiled rule pack for one domain schema.
pub struct RulePack {
    attributes: Vec<AttributeRules>,
    acts: Vec<ActCues>,
}

/// Evidence gathered for one attribute while parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeEvidence {
    /// Distinct values matched by rules or placeholder detection, ordered by
    /// first occurrence in the utterance.
    RuleMatches { values: Vec<String> },
    /// Classifier distribution over values plus the n/a class.
    ClassProbs { probs: Vec<(String, f64)>, argmax: String, prob: f64 },
}

impl AttributeEvidence {
    /// Values this evidence asserts are present (empty for absent/n-a).
    pub fn asserted_values(&self) -> Vec<&str> {
        match self {
            AttributeEvidence::RuleMatches { values } => values.iter().map(|v| v.as_str()).collect(),
            AttributeEvidence::ClassProbs { argmax, .. } => {
                if argmax == "n/a" {
                    Vec::new()
                } else {
                    vec![argmax.as_str()]
                }
            }
        }
    }
}

/// Result of parsing one utterance back into an MR. `valid=false` keeps the
/// evidence but carries no MR; `valid=true` guarantees `mr` passes schema
/// validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub mr: Option<MeaningRepresentation>,
    pub valid: bool,
    /// Per-attribute evidence in schema attribute order (attributes with no
    /// evidence are omitted).
    pub evidence: Vec<(String, AttributeEvidence)>,
    /// Dialogue acts whose cue patterns matched, in pack order.
    pub acts_matched: Vec<String>,
    /// Human-readable reasons when valid=false.
    pub reasons: Vec<String>,
}

impl ParseOutcome {
    pub fn evidence_for(&self, attribute: &str) -> Option<&AttributeEvidence> {
        self.evidence
            .iter()
            .find(|(a, _)| a.eq_ignore_ascii_case(attribute))
            .map(|(_, e)| e)
    }
}

/// Wrap a pack pattern so it only matches at token boundaries of the
/// space-joined stream.
fn compile_anchored(pattern: &str) -> Result<Regex> {
    let wrapped = format!(r"(?:^|[ ])(?:{pattern})(?:[ ]|$)");
    let re = Regex::new(&wrapped)
        .map_err(|e| Error::Config(format!("rule pattern `/{pattern}/` does not compile: {e}")))?;
    if re.is_match("") || re.is_match(" ") {
        return Err(Error::Config(format!(
            "rule pattern `/{pattern}/` matches the empty token stream"
        )));
    }
    Ok(re)
}

/// The surface form a value takes in a tokenized utterance: its own tokens
/// joined by single spaces, regex-escaped.
fn value_surface_pattern(value: &str) -> String {
    let tokens = tokenize(value);
    regex::escape(&tokens.join(" "))
}

impl RulePack {
    pub fn load(path: &Path, schema: &DomainSchema) -> Result<RulePack> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text, schema)
    }

    pub fn from_str(text: &str, schema: &DomainSchema) -> Result<RulePack> {
        enum Section {
            None,
            Attribute(usize),
            Act(usize),
        }
        let mut pack = RulePack { attributes: Vec::new(), acts: Vec::new() };
        let mut section = Section::None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim().to_string();
            if line.is_empty() {
                continue;
            }
            let fail = |msg: String| Error::Config(format!("rule pack line {}: {msg}", lineno + 1));

            if let Some(header) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let mut parts = header.splitn(2, ' ');
                let kind = parts.next().unwrap_or("");
                let name = parts.next().unwrap_or("").trim();
                match kind {
                    "attribute" => {
                        let def = schema
                            .attribute(name)
                            .ok_or_else(|| fail(format!("unknown attribute `{name}`")))?;
                        if pack.attributes.iter().any(|a| a.attribute == def.name) {
                            return Err(fail(format!("duplicate attribute section `{name}`")));
                        }
                        pack.attributes
                            .push(AttributeRules { attribute: def.name.clone(), rules: Vec::new() });
                        section = Section::Attribute(pack.attributes.len() - 1);
                    }
                    "act" => {
                        let def = schema
                            .act(name)
                            .ok_or_else(|| fail(format!("unknown act `{name}`")))?;
                        if pack.acts.iter().any(|a| a.act == def.name) {
                            return Err(fail(format!("duplicate act section `{name}`")));
                        }
                        pack.acts.push(ActCues { act: def.name.clone(), cues: Vec::new() });
                        section = Section::Act(pack.acts.len() - 1);
                    }
                    other => return Err(fail(format!("unknown section kind `{other}`"))),
                }
                continue;
            }

            let Some(rest) = line.strip_prefix('/') else {
                return Err(fail(format!("expected `[section]` or `/pattern/`, got `{line}`")));
            };
            let Some(end) = rest.rfind('/') else {
                return Err(fail("unterminated /pattern/".into()));
            };
            let pattern = &rest[..end];
            let tail = rest[end + 1..].trim();

            match section {
                Section::None => return Err(fail("pattern before any [section]".into())),
                Section::Act(idx) => {
                    if !tail.is_empty() {
                        return Err(fail(format!("act cues take no value part, got `{tail}`")));
                    }
                    pack.acts[idx].cues.push(compile_anchored(pattern)?);
                }
                Section::Attribute(idx) => {
                    let Some(value) = tail.strip_prefix("=>").map(str::trim) else {
                        return Err(fail("attribute rule needs `=> value`".into()));
                    };
                    if value.is_empty() {
                        return Err(fail("empty value after `=>`".into()));
                    }
                    let attr_name = pack.attributes[idx].attribute.clone();
                    let def = schema.attribute(&attr_name).expect("validated above");
                    if value == "@value" {
                        if !pattern.contains("@value") {
                            return Err(fail("`=> @value` needs `@value` in the pattern".into()));
                        }
                        for v in &def.values {
                            let expanded = pattern.replace("@value", &value_surface_pattern(v));
                            pack.attributes[idx].rules.push(Rule {
                                pattern: compile_anchored(&expanded)?,
                                value: v.clone(),
                            });
                        }
                    } else {
                        let canon = def.canonical_value(value).ok_or_else(|| {
                            fail(format!("value `{value}` not in vocabulary of `{attr_name}`"))
                        })?;
                        pack.attributes[idx]
                            .rules
                            .push(Rule { pattern: compile_anchored(pattern)?, value: canon });
                    }
                }
            }
        }

        pack.validate(schema)?;
        Ok(pack)
    }

    /// Every (attribute, value) in a pack section must be reachable by at
    /// least one rule; delexicalizable attributes are exempt (placeholder
    /// detection reaches them without rules).
    fn validate(&self, schema: &DomainSchema) -> Result<()> {
        for section in &self.attributes {
            let def = schema.attribute(&section.attribute).expect("checked at load");
            if def.delexicalizable {
                continue;
            }
            for v in &def.values {
                if !section.rules.iter().any(|r| &r.value == v) {
                    return Err(Error::Config(format!(
                        "attribute `{}`: value `{v}` unreachable by any rule",
                        section.attribute
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn has_act_cues(&self) -> bool {
        !self.acts.is_empty()
    }
}

fn strip_comment(line: &str) -> &str {
    // A `#` inside /.../ is part of the pattern; only strip after the final
    // `/` (or anywhere on lines that never open a pattern).
    match line.find('/') {
        None => line.split('#').next().unwrap_or(""),
        Some(_) => match line.rfind('/') {
            Some(end) => {
                let tail = &line[end + 1..];
                match tail.find('#') {
                    Some(pos) => &line[..end + 1 + pos],
                    None => line,
                }
            }
            None => line,
        },
    }
}

/// Match positions for one attribute: distinct values ordered by first
/// occurrence position.
fn matched_values(
    pack_rules: Option<&AttributeRules>,
    def: &crate::corpus::schema::AttributeDef,
    joined: &str,
    tokens: &[String],
) -> Vec<String> {
    let mut hits: Vec<(usize, String)> = Vec::new();
    // Placeholder presence for delexicalizable attributes.
    if def.delexicalizable {
        for (i, tok) in tokens.iter().enumerate() {
            if def.is_placeholder_value(tok) && !hits.iter().any(|(_, v)| v == tok) {
                hits.push((i, tok.clone()));
            }
        }
    }
    if let Some(section) = pack_rules {
        for rule in &section.rules {
            if let Some(m) = rule.pattern.find(joined) {
                // Position in tokens: count spaces before the match start.
                let tok_pos = joined[..m.start()].matches(' ').count();
                if !hits.iter().any(|(_, v)| *v == rule.value) {
                    hits.push((tok_pos, rule.value.clone()));
                }
            }
        }
    }
    hits.sort_by_key(|(pos, _)| *pos);
    hits.into_iter().map(|(_, v)| v).collect()
}

/// Parse an utterance against the pack. Total: invalidity is reported in the
/// outcome, never as an error. The joined token stream is lowercased for
/// pattern matching; placeholder detection reads the raw tokens.
pub fn rule_parse(utt: &Utterance, pack: &RulePack, schema: &DomainSchema) -> ParseOutcome {
    let joined = utt.tokens.join(" ").to_lowercase();
    let mut evidence = Vec::new();
    let mut reasons = Vec::new();

    // Acts: cue sections decide the act; packs without cues imply inform.
    let acts_matched: Vec<String> = pack
        .acts
        .iter()
        .filter(|a| a.cues.iter().any(|c| c.is_match(&joined)))
        .map(|a| a.act.clone())
        .collect();
    let act = if pack.has_act_cues() {
        match acts_matched.len() {
            1 => Some(acts_matched[0].clone()),
             0 => {
                reasons.push("no dialogue act cue matched".into());
                None
            }
            _ => {
                reasons.push(format!("multiple dialogue act cues matched: {}", acts_matched.join(", ")));
                None
            }
        }
    } else {
        Some("inform".to_string())
    };
    let allows_repeats = act
        .as_deref()
        .and_then(|a| schema.act(a))
        .map(|a| a.allows_repeats)
        .unwrap_or(false);

    // Evidence per schema attribute, in schema order.
    let mut slots: Vec<(String, String)> = Vec::new();
    let mut conflicted = false;
    for def in &schema.attributes {
        let section = pack.attributes.iter().find(|s| s.attribute == def.name);
        if section.is_none() && !def.delexicalizable {
            continue;
        }
        let values = matched_values(section, def, &joined, &utt.tokens);
        if values.is_empty() {
            continue;
        }
        if values.len() > 1 && !allows_repeats {
            reasons.push(format!(
                "attribute `{}` matched conflicting values: {}",
                def.name,
                values.join(", ")
            ));
            conflicted = true;
        } else {
            for v in &values {
                slots.push((def.name.clone(), v.clone()));
            }
        }
        evidence.push((def.name.clone(), AttributeEvidence::RuleMatches { values }));
    }

    let mut valid = act.is_some() && !conflicted;
    let mut mr = None;
    if valid {
        let act_name = act.expect("checked");
        for required in schema.required_for_act(&act_name) {
            if !slots.iter().any(|(a, _)| a.eq_ignore_ascii_case(required)) {
                reasons.push(format!("required attribute `{required}` not found"));
                valid = false;
            }
        }
        if valid {
            let mut candidate = MeaningRepresentation::new(act_name, slots);
            match candidate.validate_and_canonicalize(schema, None) {
                Ok(()) => mr = Some(candidate),
                Err(e) => {
                    reasons.push(format!("parsed slots do not form a valid MR: {e}"));
                    valid = false;
                }
            }
        }
    }

    ParseOutcome { mr, valid, evidence, acts_matched, reasons }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e2e_like_schema() -> DomainSchema {
        DomainSchema::from_toml_str(
            r#"
            name = "mini_e2e"
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
            "#,
        )
        .unwrap()
    }

    fn e2e_like_pack(schema: &DomainSchema) -> RulePack {
        RulePack::from_str(
            r#"
            # food by value, plus family-friendliness cues
            [attribute food]
            /@value food/ => @value

            [attribute familyFriendly]
            /not (family|kid|child) friendly/ => no
            /is (family|kid|child) friendly/ => yes

            [attribute name]
            /@value/ => @value
            "#,
            schema,
        )
        .unwrap()
    }

    #[test]
    fn family_friendly_cue_parses_to_yes() {
        let schema = e2e_like_schema();
        let pack = e2e_like_pack(&schema);
        let utt = Utterance::from_raw("The Punter is family friendly .");
        let out = rule_parse(&utt, &pack, &schema);
        assert!(out.valid, "reasons: {:?}", out.reasons);
        let mr = out.mr.unwrap();
        assert_eq!(mr.value_of("familyFriendly"), Some("yes"));
        assert_eq!(mr.value_of("name"), Some("The Punter"));
    }

    #[test]
    fn negated_cue_wins_by_position_not_order() {
        let schema = e2e_like_schema();
        let pack = e2e_like_pack(&schema);
        let utt = Utterance::from_raw("The Mill is not family friendly .");
        let out = rule_parse(&utt, &pack, &schema);
        // "is not family friendly" contains "not family friendly" but the
        // yes-pattern needs "is (family...) friendly" with `is` adjacent;
        // here "is not family friendly" fails the yes-pattern.
        assert!(out.valid, "reasons: {:?}", out.reasons);
        assert_eq!(out.mr.unwrap().value_of("familyFriendly"), Some("no"));
    }

    #[test]
    fn placeholder_presence_detects_delex_name() {
        let schema = e2e_like_schema();
        let pack = e2e_like_pack(&schema);
        let utt = Utterance::from_tokens(
            ["NAME", "serves", "italian", "food", "."].iter().map(|s| s.to_string()).collect(),
        );
        let out = rule_parse(&utt, &pack, &schema);
        assert!(out.valid, "reasons: {:?}", out.reasons);
        let mr = out.mr.unwrap();
        assert_eq!(mr.value_of("name"), Some("NAME"));
        assert_eq!(mr.value_of("food"), Some("Italian"));
    }

    #[test]
    fn conflicting_food_values_invalidate() {
        let schema = e2e_like_schema();
        let pack = e2e_like_pack(&schema);
        let utt = Utterance::from_raw("The Mill serves italian food and french food .");
        let out = rule_parse(&utt, &pack, &schema);
        assert!(!out.valid);
        assert!(out.mr.is_none());
        let ev = out.evidence_for("food").unwrap();
        assert_eq!(
            ev.asserted_values(),
            vec!["Italian", "French"],
            "both foods should be evidenced in utterance order"
        );
        assert!(out.reasons.iter().any(|r| r.contains("food")));
    }

    #[test]
    fn missing_required_name_invalidates() {
        let schema = e2e_like_schema();
        let pack = e2e_like_pack(&schema);
        let utt = Utterance::from_raw("it serves french food .");
        let out = rule_parse(&utt, &pack, &schema);
        assert!(!out.valid);
        assert!(out.reasons.iter().any(|r| r.contains("name")));
    }

    #[test]
    fn whitespace_runs_do_not_change_the_parse() {
        let schema = e2e_like_schema();
        let pack = e2e_like_pack(&schema);
        let a = rule_parse(&Utterance::from_raw("The Mill   serves french   food ."), &pack, &schema);
        let b = rule_parse(&Utterance::from_raw("The Mill serves french food ."), &pack, &schema);
        assert_eq!(a, b);
    }

    #[test]
    fn act_cues_classify_and_must_be_unique() {
        let schema = DomainSchema::from_toml_str(
            r#"
            name = "da"

            [[acts]]
            name = "inform"
            required_attributes = ["name"]

            [[acts]]
            name = "recommend"
            required_attributes = ["name"]

            [[acts]]
            name = "compare"
            allows_repeats = true
            required_attributes = ["name"]

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["alpha"]
            delexicalizable = true

            [[attributes]]
            name = "weight"
            token = "weight"
            kind = "dictionary"
            values = ["2.5 kg", "4 kg"]
            "#,
        )
        .unwrap();
        let pack = RulePack::from_str(
            r#"
            [attribute weight]
            /weighs @value/ => @value

            [act recommend]
            /would suit|we recommend/

            [act compare]
            /compared to|while/

            [act inform]
            /there is|is a/
            "#,
            &schema,
        )
        .unwrap();

        let utt = Utterance::from_tokens(
            "we recommend the NAME which weighs 2 . 5 kg"
                .split(' ')
                .map(str::to_string)
                .collect(),
        );
        let out = rule_parse(&utt, &pack, &schema);
        assert!(out.valid, "reasons: {:?}", out.reasons);
        let mr = out.mr.unwrap();
        assert_eq!(mr.act, "recommend");
        assert_eq!(mr.value_of("weight"), Some("2.5 kg"));

        // No cue at all: invalid.
        let none = rule_parse(
            &Utterance::from_tokens(vec!["NAME".into(), "weighs".into(), "4".into(), "kg".into()]),
            &pack,
            &schema,
        );
        assert!(!none.valid);
        assert!(none.reasons.iter().any(|r| r.contains("no dialogue act")));

        // Two different cues: invalid.
        let two = rule_parse(
            &Utterance::from_tokens(
                "there is a NAME while we recommend it".split(' ').map(str::to_string).collect(),
            ),
            &pack,
            &schema,
        );
        assert!(!two.valid);
        assert!(two.reasons.iter().any(|r| r.contains("multiple dialogue act")));
    }

    #[test]
    fn compare_act_allows_repeated_placeholders_in_utterance_order() {
        let schema = DomainSchema::from_toml_str(
            r#"
            name = "da"

            [[acts]]
            name = "compare"
            allows_repeats = true
            required_attributes = ["name"]

            [[attributes]]
            name = "name"
            token = "name"
            kind = "dictionary"
            values = ["alpha"]
            delexicalizable = true

            [[attributes]]
            name = "weight"
            token = "weight"
            kind = "dictionary"
            values = ["2.5 kg", "4 kg"]
            "#,
        )
        .unwrap();
        let pack = RulePack::from_str(
            r#"
            [attribute weight]
            /weighs @value/ => @value

            [act compare]
            /compared to|while/
            "#,
            &schema,
        )
        .unwrap();
        let utt = Utterance::from_tokens(
            "NAME_1 weighs 2 . 5 kg while NAME_2 weighs 4 kg"
                .split(' ')
                .map(str::to_string)
                .collect(),
        );
        let out = rule_parse(&utt, &pack, &schema);
        assert!(out.valid, "reasons: {:?}", out.reasons);
        let mr = out.mr.unwrap();
        assert_eq!(mr.values_of("name"), vec!["NAME_1", "NAME_2"]);
        assert_eq!(mr.values_of("weight"), vec!["2.5 kg", "4 kg"]);
    }

    #[test]
    fn pack_loader_rejects_bad_input() {
        let schema = e2e_like_schema();
        // Unknown attribute.
        assert!(RulePack::from_str("[attribute bogus]\n/x/ => y\n", &schema).is_err());
        // Unknown value.
        assert!(RulePack::from_str("[attribute food]\n/x/ => sushi\n", &schema).is_err());
        // Pattern before section.
        assert!(RulePack::from_str("/x/ => Italian\n", &schema).is_err());
        // Bad regex.
        assert!(RulePack::from_str("[attribute food]\n/(/ => Italian\n", &schema).is_err());
        // Unreachable value: only Italian gets a rule.
        assert!(RulePack::from_str("[attribute food]\n/italian/ => Italian\n", &schema).is_err());
        // Empty-match pattern.
        assert!(RulePack::from_str("[attribute food]\n/x?/ => Italian\n", &schema).is_err());
        // Act cue with a value part.
        let da = RulePack::from_str("[act inform]\n/x/ => y\n", &schema);
        assert!(da.is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let schema = e2e_like_schema();
        let pack = RulePack::from_str(
            "# full line comment\n\n[attribute food]  \n/@value food/ => @value  # trailing\n",
            &schema,
        )
        .unwrap();
        let utt = Utterance::from_raw("The Mill serves italian food .");
        let out = rule_parse(&utt, &pack, &schema);
        assert_eq!(out.evidence_for("food").unwrap().asserted_values(), vec!["Italian"]);
    }

    #[test]
    fn patterns_anchor_at_token_boundaries() {
        let schema = e2e_like_schema();
        let pack = RulePack::from_str(
            "[attribute food]\n/@value food/ => @value\n/french/ => French\n",
            &schema,
        )
        .unwrap();
        // "frenchman" must not trigger the bare /french/ rule.
        let utt = Utterance::from_raw("The Mill hired a frenchman .");
        let out = rule_parse(&utt, &pack, &schema);
        assert!(out.evidence_for("food").is_none());
    }

    #[test]
    fn pound_sign_values_match_token_stream() {
        let schema = DomainSchema::from_toml_str(
            r#"
            name = "prices"
            [[acts]]
            name = "inform"
            [[attributes]]
            name = "priceRange"
            token = "price_range"
            kind = "dictionary"
            values = ["less than £20", "£20-25"]
            "#,
        )
        .unwrap();
        let pack = RulePack::from_str("[attribute priceRange]\n/@value/ => @value\n", &schema).unwrap();
        let utt = Utterance::from_raw("prices are less than £20 .");
        let out = rule_parse(&utt, &pack, &schema);
        assert!(out.valid, "reasons: {:?}", out.reasons);
        assert_eq!(out.mr.unwrap().value_of("priceRange"), Some("less than £20"));
    }
}
