//! Corpus file loaders.
//!
//! E2E-format corpora are CSV files with two fields per row (`mr`, `ref`) and
//! an optional header; the MR field uses the bare `attr[value], …` syntax.
//! Dialogue-act corpora are JSON Lines files, one record per MR:
//! `{"da": "act(attr[value], …)", "refs": ["…", …]}`.

use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::mr::MeaningRepresentation;
use super::schema::DomainSchema;
use super::types::{Dataset, Example, Split, Utterance};

/// Load an E2E-format CSV corpus. Duplicate (MR, ref) rows are preserved as
/// distinct examples; every row becomes one single-reference example.
pub fn load_e2e_corpus(path: &Path, schema: &DomainSchema, split: Split) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(Error::Csv)?;
    let mut ds = Dataset::new(schema.clone(), split);
    for (i, row) in reader.records().enumerate() {
        let record = row?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 {
            let looks_like_header =
                record.len() >= 2 && record[0].trim() == "mr" && record[1].trim() == "ref";
            if looks_like_header {
                continue;
            }
        }
        if record.len() < 2 {
            return Err(Error::mr_syntax(
                Some(line),
                format!("expected 2 fields (mr, ref), found {}", record.len()),
            ));
        }
        let mr = MeaningRepresentation::parse_at(&record[0], schema, Some(line))?;
        let reference = Utterance::from_raw(&record[1]);
        if reference.is_empty() {
            return Err(Error::mr_syntax(Some(line), "empty reference text"));
        }
        ds.examples.push(Example { mr, refs: vec![reference] });
    }
    Ok(ds)
}

/// Write a dataset back out in the E2E CSV format, one row per reference.
pub fn save_e2e_corpus(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .from_path(path)
        .map_err(Error::Csv)?;
    writer.write_record(["mr", "ref"])?;
    for ex in &ds.examples {
        let mr = ex.mr.bare_string(&ds.schema);
        for r in &ex.refs {
            writer.write_record([mr.as_str(), r.raw.as_str()])?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
struct DaRecord {
    da: String,
    refs: Vec<String>,
}

/// Load a dialogue-act JSONL corpus (Laptops/TVs format).
pub fn load_da_corpus(path: &Path, schema: &DomainSchema, split: Split) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ds = Dataset::new(schema.clone(), split);
    for (i, raw_line) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let record: DaRecord = serde_json::from_str(raw_line)
            .map_err(|e| Error::mr_syntax(Some(line), format!("bad record: {e}")))?;
        let mr = MeaningRepresentation::parse_at(&record.da, schema, Some(line))?;
        if record.refs.is_empty() {
            return Err(Error::mr_syntax(Some(line), "record has no references"));
        }
        let refs: Vec<Utterance> = record.refs.iter().map(|r| Utterance::from_raw(r)).collect();
        if refs.iter().any(|r| r.is_empty()) {
            return Err(Error::mr_syntax(Some(line), "empty reference text"));
        }
        ds.examples.push(Example { mr, refs });
    }
    Ok(ds)
}

/// Write a dialogue-act corpus as JSONL.
pub fn save_da_corpus(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for ex in &ds.examples {
        let record = serde_json::json!({
            "da": ex.mr.canonical_string(&ds.schema),
            "refs": ex.refs.iter().map(|r| r.raw.as_str()).collect::<Vec<_>>(),
        });
        writeln!(out, "{record}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
