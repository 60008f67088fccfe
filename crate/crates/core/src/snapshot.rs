//! Versioned, byte-stable serialization of a knowledge base.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AliasPolicy, GraphStore};
use crate::kb::KnowledgeBase;
use crate::model::{Entity, Relation, Timestamp};
use crate::resolution::{SynonymCandidate, SynonymDecision};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub schema_version: u32,
    pub written_at: Timestamp,
    pub alias_policy: AliasPolicy,
    pub next_entity: u64,
    pub next_relation: u64,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
    pub synonym_candidates: Vec<SynonymCandidate>,
    pub synonym_decisions: Vec<SynonymDecision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("snapshot schema version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl GraphSnapshot {
    pub fn capture(kb: &KnowledgeBase, at: Timestamp) -> Self {
        let g = kb.graph();
        GraphSnapshot {
            schema_version: SCHEMA_VERSION,
            written_at: at,
            alias_policy: g.alias_policy(),
            next_entity: g.next_entity,
            next_relation: g.next_relation,
            entities: g.entities().cloned().collect(),
            relations: g.relations().cloned().collect(),
            synonym_candidates: kb.candidates().cloned().collect(),
            synonym_decisions: kb.decisions().to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        // serialization of these types cannot fail: all map keys are strings
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| SnapshotError::CorruptSnapshot(alloc::format!("{e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(SnapshotError::SchemaVersionMismatch {
                found: header.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| SnapshotError::CorruptSnapshot(alloc::format!("{e}")))
    }

    pub fn restore(self) -> Result<KnowledgeBase, SnapshotError> {
        let graph = GraphStore::from_parts(
            self.alias_policy,
            self.entities,
            self.relations,
            self.next_entity,
            self.next_relation,
        )
        .map_err(SnapshotError::CorruptSnapshot)?;
        Ok(KnowledgeBase::from_parts(
            graph,
            self.synonym_candidates,
            self.synonym_decisions,
        ))
    }
}

impl KnowledgeBase {
    pub fn snapshot(&self, at: Timestamp) -> GraphSnapshot {
        GraphSnapshot::capture(self, at)
    }
}
