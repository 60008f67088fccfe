//! The artifact database: a JSON snapshot plus an append-only JSONL journal.
//!
//! Every mutation goes through [`KnowledgeBase::apply`] with journaling on;
//! [`Database::commit`] appends the outbox to `journal.jsonl` and syncs it.
//! Opening replays the journal over the snapshot. A torn final line (crash
//! mid-append) is dropped and the file truncated to the last whole record.
//! [`Database::compact`] folds the journal into a fresh snapshot.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sckg_core::graph::AliasPolicy;
use sckg_core::model::Timestamp;
use sckg_core::resolution::{
    CandidateState, Decision, PairKey, SynonymCandidate, SynonymDecision,
};
use sckg_core::snapshot::{GraphSnapshot, SnapshotError};
use sckg_core::{Applied, KbError, KnowledgeBase, Mutation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SNAPSHOT_FILE: &str = "graph.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("database io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error(transparent)]
    Kb(#[from] KbError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DbError + '_ {
    move |source| DbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `bytes` to `path` through a temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DbError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OpenReport {
    pub replayed: usize,
    /// Bytes of a torn trailing record that were discarded.
    pub truncated_bytes: usize,
}

#[derive(Debug)]
pub struct Database {
    dir: PathBuf,
    kb: KnowledgeBase,
}

impl Database {
    pub fn open(dir: impl Into<PathBuf>, policy: AliasPolicy) -> Result<(Self, OpenReport), DbError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let snap = dir.join(SNAPSHOT_FILE);
        let mut kb = match fs::read_to_string(&snap) {
            Ok(text) => GraphSnapshot::from_json(&text)?.restore()?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => KnowledgeBase::new(policy),
            Err(e) => return Err(io(&snap)(e)),
        };
        let report = replay_journal(&mut kb, &dir.join(JOURNAL_FILE))?;
        kb.set_journaling(true);
        Ok((Database { dir, kb }, report))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn kb_mut(&mut self) -> &mut KnowledgeBase {
        &mut self.kb
    }

    /// Swap in a whole knowledge base (used when resuming from a checkpoint).
    /// The next [`compact`](Self::compact) persists it.
    pub fn replace(&mut self, mut kb: KnowledgeBase) {
        kb.set_journaling(true);
        self.kb = kb;
    }

    /// Append pending mutations to the journal. Returns how many were written.
    pub fn commit(&mut self) -> Result<usize, DbError> {
        let pending = self.kb.drain_journal();
        if pending.is_empty() {
            return Ok(0);
        }
        let path = self.dir.join(JOURNAL_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        let mut buf = String::new();
        for m in &pending {
            buf.push_str(&serde_json::to_string(m).expect("mutation serializes"));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))?;
        Ok(pending.len())
    }

    /// Write a snapshot of the current state and empty the journal.
    pub fn compact(&mut self, at: Timestamp) -> Result<(), DbError> {
        self.kb.drain_journal();
        let json = self.kb.snapshot(at).to_json();
        write_atomic(&self.dir.join(SNAPSHOT_FILE), json.as_bytes())?;
        let journal = self.dir.join(JOURNAL_FILE);
        File::create(&journal).map_err(io(&journal))?;
        Ok(())
    }
}

fn replay_journal(kb: &mut KnowledgeBase, path: &Path) -> Result<OpenReport, DbError> {
    let text = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(OpenReport::default()),
        Err(e) => return Err(io(path)(e)),
    };
    let mut report = OpenReport::default();
    let mut good_len = 0usize;
    let mut start = 0usize;
    let mut line_no = 0usize;
    while start < text.len() {
        line_no += 1;
        let end = text[start..].iter().position(|&b| b == b'\n').map(|i| start + i);
        let Some(end) = end else {
            // no newline: a torn final append
            report.truncated_bytes = text.len() - start;
            break;
        };
        let line = &text[start..end];
        if !line.iter().all(u8::is_ascii_whitespace) {
            let m: Mutation = serde_json::from_slice(line).map_err(|e| DbError::Journal {
                line: line_no,
                message: e.to_string(),
            })?;
            kb.apply(m).map_err(|e| DbError::Journal {
                line: line_no,
                message: e.to_string(),
            })?;
            report.replayed += 1;
        }
        start = end + 1;
        good_len = start;
    }
    if report.truncated_bytes > 0 {
        tracing::warn!(bytes = report.truncated_bytes, "discarding torn journal tail");
        let f = OpenOptions::new().write(true).open(path).map_err(io(path))?;
        f.set_len(good_len as u64).map_err(io(path))?;
    }
    Ok(report)
}

/// Synonym table as JSONL, one decision per line.
pub fn export_synonyms(kb: &KnowledgeBase) -> String {
    kb.decisions()
        .iter()
        .map(|d| serde_json::to_string(d).expect("decision serializes") + "\n")
        .collect()
}

pub fn parse_synonyms(text: &str) -> Result<Vec<SynonymDecision>, DbError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DbError::Journal {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub merged: usize,
    pub blocked: usize,
    pub skipped: usize,
}

/// Apply an exported synonym table to another store holding the same ids.
/// Merges are re-executed; keep-separate decisions become blocklist entries.
pub fn import_synonyms(
    kb: &mut KnowledgeBase,
    decisions: &[SynonymDecision],
) -> Result<ImportReport, DbError> {
    let mut report = ImportReport::default();
    let known: BTreeSet<(PairKey, Option<sckg_core::model::EntityId>)> =
        kb.decisions().iter().map(|d| (d.pair, d.survivor)).collect();
    for d in decisions {
        let live = |id| kb.graph().entity(id).is_some();
        if known.contains(&(d.pair, d.survivor)) || !live(d.pair.a()) || !live(d.pair.b()) {
            report.skipped += 1;
            continue;
        }
        let state = match (d.decision, d.survivor) {
            (Decision::Merge, Some(_)) => CandidateState::Approved,
            (Decision::KeepSeparate, _) => CandidateState::RejectedByHuman,
            (Decision::Merge, None) => {
                report.skipped += 1;
                continue;
            }
        };
        let prior = kb.candidate(d.pair).cloned();
        let mut cand = prior.unwrap_or(SynonymCandidate {
            pair: d.pair,
            sources: Default::default(),
            name_similarity: 0.0,
            embedding_similarity: None,
            shared_neighbors: 0,
            llm_verdict: None,
            state,
        });
        cand.state = state;
        kb.apply(Mutation::PutCandidate { candidate: cand })?;
        if let (Some(survivor), Some(absorbed)) =
            (d.survivor, d.survivor.and_then(|s| d.pair.other(s)))
        {
            if let Applied::Merge(r) = kb.apply(Mutation::MergeEntities { survivor, absorbed })? {
                if !r.noop {
                    report.merged += 1;
                }
            }
        } else {
            report.blocked += 1;
        }
        kb.apply(Mutation::RecordDecision { decision: d.clone() })?;
    }
    Ok(report)
}
