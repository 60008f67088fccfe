//! Labeling sheets for precision audits.
//!
//! A sheet is UTF-8 CSV with the fixed header
//! `relation_id,source,kind,target,quote,url,label`. Export leaves `label`
//! empty; annotators fill in `true` or `false` (also accepted: `1`/`0`,
//! `yes`/`no`, `y`/`n`). Blank labels are skipped on import.

use std::collections::BTreeMap;

use sckg_core::analytics::{sample_relations, EvalError};
use sckg_core::graph::GraphStore;
use sckg_core::model::RelationId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: [&str; 7] = ["relation_id", "source", "kind", "target", "quote", "url", "label"];

#[derive(Debug, Error)]
pub enum LabelError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("labeling sheet header must be {expected}, found {found}")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: unknown relation id {value:?}")]
    BadId { line: u64, value: String },
    #[error("line {line}: label {value:?} is not true or false")]
    BadLabel { line: u64, value: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub relation_id: String,
    pub source: String,
    pub kind: String,
    pub target: String,
    pub quote: String,
    pub url: String,
    pub label: String,
}

fn row(graph: &GraphStore, id: RelationId) -> Option<SheetRow> {
    let r = graph.relation(id)?;
    let name = |e| graph.entity(e).map_or_else(String::new, |e| e.canonical_name.clone());
    let ev = r.evidence.first();
    Some(SheetRow {
        relation_id: id.to_string(),
        source: name(r.source),
        kind: r.kind.as_str().to_string(),
        target: name(r.target),
        quote: ev.map(|e| e.quote.clone()).unwrap_or_default(),
        url: ev.and_then(|e| e.source_url.clone()).unwrap_or_default(),
        label: String::new(),
    })
}

/// Seeded sample of `population` written as a sheet, in drawn order.
pub fn labeling_sheet(
    graph: &GraphStore,
    population: &[RelationId],
    sample_size: usize,
    seed: u64,
) -> Result<String, LabelError> {
    let sample = sample_relations(population, sample_size, seed)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER)?;
    for id in sample {
        if let Some(r) = row(graph, id) {
            w.serialize(r)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 strings"))
}

fn parse_label(s: &str) -> Option<Option<bool>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Some(None),
        "true" | "1" | "yes" | "y" => Some(Some(true)),
        "false" | "0" | "no" | "n" => Some(Some(false)),
        _ => None,
    }
}

/// Read labels from a filled-in sheet.
pub fn parse_labels(text: &str) -> Result<BTreeMap<RelationId, bool>, LabelError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(LabelError::BadHeader {
            expected: HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id_text = rec.get(0).unwrap_or_default();
        let id: RelationId = id_text.trim().parse().map_err(|_| LabelError::BadId {
            line,
            value: id_text.into(),
        })?;
        let label_text = rec.get(6).unwrap_or_default();
        match parse_label(label_text) {
            Some(Some(l)) => {
                out.insert(id, l);
            }
            Some(None) => {}
            None => {
                return Err(LabelError::BadLabel {
                    line,
                    value: label_text.into(),
                })
            }
        }
    }
    Ok(out)
}
