//! The journaled knowledge base: graph store plus synonym table.
//!
//! Every write is a [`Mutation`] passed to [`KnowledgeBase::apply`]. With
//! journaling on, applied mutations collect in an outbox that the storage
//! layer drains to its append-only log; replaying that log against the last
//! snapshot rebuilds the same state.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AliasPolicy, EntityUpsert, GraphError, GraphStore, MergeReport, RelationUpsert};
use crate::model::{
    Attributes, EntityId, EntityKind, Evidence, RelationId, RelationKind, Timestamp,
    VerificationRecord,
};
use crate::resolution::{CandidateState, PairKey, SynonymCandidate, SynonymDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    UpsertEntity {
        kind: EntityKind,
        name: String,
        #[serde(default)]
        aliases: Vec<String>,
        #[serde(default)]
        jurisdiction: Option<String>,
        at: Timestamp,
    },
    UpsertRelation {
        kind: RelationKind,
        source: EntityId,
        target: EntityId,
        evidence: Vec<Evidence>,
        #[serde(default)]
        attributes: Attributes,
        at: Timestamp,
    },
    MergeEntities {
        survivor: EntityId,
        absorbed: EntityId,
    },
    JudgeRelation {
        id: RelationId,
        record: VerificationRecord,
    },
    PutCandidate {
        candidate: SynonymCandidate,
    },
    RecordDecision {
        decision: SynonymDecision,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Applied {
    Entity(EntityUpsert),
    Relation(RelationUpsert),
    Merge(MergeReport),
    Judged,
    Candidate,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("candidate pair {0} has mismatched or missing entities")]
    InvalidCandidate(PairKey),
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    graph: GraphStore,
    candidates: BTreeMap<PairKey, SynonymCandidate>,
    decisions: Vec<SynonymDecision>,
    journaling: bool,
    outbox: Vec<Mutation>,
}

impl KnowledgeBase {
    pub fn new(policy: AliasPolicy) -> Self {
        KnowledgeBase {
            graph: GraphStore::new(policy),
            ..Default::default()
        }
    }

    pub(crate) fn from_parts(
        graph: GraphStore,
        candidates: Vec<SynonymCandidate>,
        decisions: Vec<SynonymDecision>,
    ) -> Self {
        KnowledgeBase {
            graph,
            candidates: candidates.into_iter().map(|c| (c.pair, c)).collect(),
            decisions,
            journaling: false,
            outbox: Vec::new(),
        }
    }

    pub fn graph(&self) -> &GraphStore {
        &self.graph
    }

    pub fn candidates(&self) -> impl Iterator<Item = &SynonymCandidate> {
        self.candidates.values()
    }

    pub fn candidate(&self, pair: PairKey) -> Option<&SynonymCandidate> {
        self.candidates.get(&pair)
    }

    pub fn decisions(&self) -> &[SynonymDecision] {
        &self.decisions
    }

    /// Pairs a human said to keep apart; never proposed again.
    pub fn blocked_pairs(&self) -> BTreeSet<PairKey> {
        self.candidates
            .values()
            .filter(|c| c.state == CandidateState::RejectedByHuman)
            .map(|c| c.pair)
            .collect()
    }

    pub fn set_journaling(&mut self, on: bool) {
        self.journaling = on;
    }

    /// Take the mutations applied since the last drain.
    pub fn drain_journal(&mut self) -> Vec<Mutation> {
        core::mem::take(&mut self.outbox)
    }

    pub fn pending_journal(&self) -> usize {
        self.outbox.len()
    }

    pub fn apply(&mut self, mutation: Mutation) -> Result<Applied, KbError> {
        let applied = self.apply_inner(&mutation)?;
        if self.journaling {
            self.outbox.push(mutation);
        }
        Ok(applied)
    }

    fn apply_inner(&mut self, mutation: &Mutation) -> Result<Applied, KbError> {
        Ok(match mutation {
            Mutation::UpsertEntity {
                kind,
                name,
                aliases,
                jurisdiction,
                at,
            } => Applied::Entity(self.graph.upsert_entity(
                *kind,
                name,
                aliases,
                jurisdiction.as_deref(),
                *at,
            )?),
            Mutation::UpsertRelation {
                kind,
                source,
                target,
                evidence,
                attributes,
                at,
            } => Applied::Relation(
                self.graph
                    .upsert_relation(*kind, *source, *target, evidence, attributes, *at)?,
            ),
            Mutation::MergeEntities { survivor, absorbed } => {
                let report = self.graph.merge_entities(*survivor, *absorbed)?;
                if !report.noop {
                    self.remap_candidates(*survivor, *absorbed);
                }
                Applied::Merge(report)
            }
            Mutation::JudgeRelation { id, record } => {
                self.graph.judge_relation(*id, record.clone())?;
                Applied::Judged
            }
            Mutation::PutCandidate { candidate } => {
                let pair = candidate.pair;
                let known = |id| self.graph.entity(id).map(|e| e.kind);
                match (known(pair.a()), known(pair.b())) {
                    (Some(x), Some(y)) if x == y => {}
                    _ => return Err(KbError::InvalidCandidate(pair)),
                }
                self.candidates.insert(pair, candidate.clone());
                Applied::Candidate
            }
            Mutation::RecordDecision { decision } => {
                self.decisions.push(decision.clone());
                Applied::Decision
            }
        })
    }

    /// Point candidates at the survivor after a merge. The merged pair keeps
    /// its own record; pairs that collapse onto an existing pair keep the
    /// record whose state is more decisive.
    fn remap_candidates(&mut self, survivor: EntityId, absorbed: EntityId) {
        let own = PairKey::new(survivor, absorbed);
        let moved: Vec<PairKey> = self
            .candidates
            .keys()
            .filter(|p| *p != &own && p.contains(absorbed))
            .copied()
            .collect();
        for old in moved {
            let mut cand = self.candidates.remove(&old).expect("listed");
            let other = old.other(absorbed).expect("contains absorbed");
            if other == survivor {
                continue;
            }
            let pair = PairKey::new(survivor, other);
            cand.pair = pair;
            match self.candidates.get(&pair) {
                Some(existing) if existing.state.rank() >= cand.state.rank() => {}
                _ => {
                    self.candidates.insert(pair, cand);
                }
            }
        }
    }
}
