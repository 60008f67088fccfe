//! Seed company lists in CSV or JSONL.
//!
//! Both formats carry `name`, `aliases` (`|`-separated in CSV, a list or a
//! `|`-separated string in JSONL), `industry` and `jurisdiction`, plus an
//! optional `source_report`.

use std::path::Path;

use sckg_core::harvest::SeedRecord;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeedFileError {
    #[error("cannot read seed file: {0}")]
    Io(#[from] std::io::Error),
    #[error("seed file has no records")]
    EmptySeedFile,
    #[error("seed file line {line}: {message}")]
    ParseError { line: usize, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Aliases {
    List(Vec<String>),
    Joined(String),
}

#[derive(Debug, Deserialize)]
struct Row {
    name: String,
    #[serde(default)]
    aliases: Option<Aliases>,
    #[serde(default)]
    industry: Option<String>,
    #[serde(default)]
    jurisdiction: Option<String>,
    #[serde(default)]
    source_report: Option<String>,
}

fn split_aliases(s: &str) -> Vec<String> {
    s.split('|')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_string)
        .collect()
}

fn blank_to_none(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

impl Row {
    fn into_record(self, line: usize) -> Result<SeedRecord, SeedFileError> {
        let aliases = match self.aliases {
            Some(Aliases::List(v)) => v.into_iter().filter(|a| !a.trim().is_empty()).collect(),
            Some(Aliases::Joined(s)) => split_aliases(&s),
            None => Vec::new(),
        };
        let rec = SeedRecord {
            company_name: self.name.trim().to_string(),
            aliases,
            industry: blank_to_none(self.industry),
            jurisdiction: blank_to_none(self.jurisdiction),
            source_report: blank_to_none(self.source_report),
        };
        rec.validate().map_err(|e| SeedFileError::ParseError {
            line,
            message: e.to_string(),
        })?;
        Ok(rec)
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<SeedRecord>, SeedFileError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SeedFileError::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for rec in reader.records() {
        let bad = |line: usize, e: csv::Error| SeedFileError::ParseError {
            line,
            message: e.to_string(),
        };
        let rec = rec.map_err(|e| bad(e.position().map(|p| p.line() as usize).unwrap_or(0), e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| bad(line, e))?;
        out.push(row.into_record(line)?);
    }
    if out.is_empty() {
        return Err(SeedFileError::EmptySeedFile);
    }
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<SeedRecord>, SeedFileError> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(l).map_err(|e| SeedFileError::ParseError {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(row.into_record(i + 1)?);
    }
    if out.is_empty() {
        return Err(SeedFileError::EmptySeedFile);
    }
    Ok(out)
}

/// Pick the parser by extension: `.jsonl`/`.json` is JSONL, anything else CSV.
pub fn load_seeds(path: &Path) -> Result<Vec<SeedRecord>, SeedFileError> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "json") => parse_jsonl(&text),
        _ => parse_csv(&text),
    }
}
