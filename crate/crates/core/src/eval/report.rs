//! Report assembly: text-quality summaries and rendering of evaluation
//! results as aligned plain-text tables and machine-readable JSON.

use serde::Serialize;

use crate::corpus::schema::DomainSchema;
use crate::corpus::types::Utterance;
use crate::error::{Error, Result};
use crate::eval::bleu::corpus_bleu;
use crate::eval::slots::SlotErrorReport;
use crate::eval::surface::surface_stats;

/// Corpus-level text quality: BLEU against references plus surface shape of
/// the generated utterances.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub items: usize,
    /// 4-gram corpus BLEU with brevity penalty, in [0, 100].
    pub bleu: f64,
    pub mean_words: f64,
    pub mean_sentences: f64,
}

/// Score generated utterances against their reference sets.
pub fn quality_report(outputs: &[Utterance], refs: &[Vec<Vec<String>>]) -> Result<QualityReport> {
    let hyps: Vec<Vec<String>> = outputs.iter().map(|u| u.tokens.clone()).collect();
    let bleu = corpus_bleu(&hyps, refs, 4)?;
    let surface = surface_stats(outputs);
    Ok(QualityReport {
        items: outputs.len(),
        bleu,
        mean_words: surface.mean_words,
        mean_sentences: surface.mean_sentences,
    })
}

/// Serialize any report as pretty JSON.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Invalid(format!("report to JSON: {e}")))
}

/// Aligned per-attribute error table, rows in the schema's report order,
/// with a trailing TOTAL row.
pub fn render_slot_table(report: &SlotErrorReport, schema: &DomainSchema) -> String {
    let order = schema.report_order();
    let name_w = order
        .iter()
        .map(|a| a.len())
        .chain(["attribute".len(), "TOTAL".len()])
        .max()
        .unwrap_or(9);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_w$}  {:>7}  {:>7}  {:>12}  {:>5}\n",
        "attribute", "missing", "wrong", "hallucinated", "total"
    ));
    for attr in order {
        let counts = report.per_attribute.get(attr).copied().unwrap_or_default();
        out.push_str(&format!(
            "{attr:<name_w$}  {:>7}  {:>7}  {:>12}  {:>5}\n",
            counts.missing,
            counts.wrong_value,
            counts.hallucinated,
            counts.total()
        ));
    }
    out.push_str(&format!(
        "{:<name_w$}  {:>7}  {:>7}  {:>12}  {:>5}\n",
        "TOTAL",
        report.totals.missing,
        report.totals.wrong_value,
        report.totals.hallucinated,
        report.totals.total()
    ));
    out.push_str(&format!("items scored: {}\n", report.items));
    out
}

/// Short aligned summary of a quality report.
pub fn render_quality(report: &QualityReport) -> String {
    format!(
        "items               {:>10}\nBLEU                {:>10.2}\nwords/utterance     {:>10.2}\nsentences/utterance {:>10.2}\n",
        report.items, report.bleu, report.mean_words, report.mean_sentences
    )
}
