//! Linearization of meaning representations into encoder input tokens.

use serde::{Deserialize, Serialize};

use super::mr::MeaningRepresentation;
use super::schema::{value_slug, AttributeDef, AttributeKind, DomainSchema, DONT_CARE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinMode {
    /// One token per schema attribute, values folded in (`food_italian`);
    /// absent attributes emit n/a tokens (`area_n/a`).
    E2eLex,
    /// Fixed positions with delexicalizable attributes reduced: required ones
    /// (name) are omitted, optional ones (near) emit presence tokens.
    E2eDelex,
    /// Dialogue-act token followed by one token per slot; variable length.
    DaVariable,
}

impl std::fmt::Display for LinMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LinMode::E2eLex => "e2e-lex",
            LinMode::E2eDelex => "e2e-delex",
            LinMode::DaVariable => "da-variable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearizedInput {
    pub tokens: Vec<String>,
}

/// Input token for one fixed-position attribute slot.
fn fixed_token(attr: &AttributeDef, value: Option<&str>) -> String {
    match value {
        Some(v) => format!("{}_{}", attr.token, value_slug(v)),
        None => format!("{}_n/a", attr.token),
    }
}

/// Input token for one da-variable slot.
fn variable_token(attr: &AttributeDef, value: &str) -> String {
    if value == DONT_CARE {
        return format!("{}_dont_care", attr.token);
    }
    match attr.kind {
        AttributeKind::Binary => format!("{}_{}", attr.token, value_slug(value)),
        _ if attr.delexicalizable => attr.token.clone(),
        _ => format!("{}_{}", attr.token, value_slug(value)),
    }
}

/// Linearize a valid MR. Total: every schema-valid MR produces a token
/// sequence. Fixed modes iterate schema attribute order; da-variable follows
/// the MR's slot order.
pub fn linearize(mr: &MeaningRepresentation, schema: &DomainSchema, mode: LinMode) -> LinearizedInput {
    let tokens = match mode {
        LinMode::E2eLex => schema
            .attributes
            .iter()
            .map(|attr| fixed_token(attr, mr.value_of(&attr.name)))
            .collect(),
        LinMode::E2eDelex => schema
            .attributes
            .iter()
            .filter(|attr| !(attr.delexicalizable && schema.is_required(&attr.name)))
            .map(|attr| {
                if attr.delexicalizable {
                    match mr.has_attribute(&attr.name) {
                        true => format!("{}_present", attr.token),
                        false => format!("{}_n/a", attr.token),
                    }
                } else {
                    fixed_token(attr, mr.value_of(&attr.name))
                }
            })
            .collect(),
        LinMode::DaVariable => {
            let mut tokens = Vec::with_capacity(mr.slots.len() + 1);
            tokens.push(mr.act.clone());
            for (attr_name, value) in &mr.slots {
                let attr = schema
                    .attribute(attr_name)
                    .expect("linearize requires a schema-valid MR");
                tokens.push(variable_token(attr, value));
            }
            tokens
        }
    };
    LinearizedInput { tokens }
}
