//! In-memory property graph of entities and typed relations.
//!
//! The store enforces the model's integrity rules: unique normalized aliases
//! per entity kind among live entities, endpoint-kind constraints for every
//! relation, and at most one live relation per `(kind, source, target)`.
//! Mutations are crate-private; callers go through [`crate::KnowledgeBase`]
//! so that every write is journaled.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    merge_attributes, Attributes, Entity, EntityId, EntityKind, Evidence, Relation, RelationId,
    RelationKind, RelationStatus, Timestamp, VerdictOutcome, VerificationRecord,
};
use crate::normalize::fold;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("entity name is empty")]
    EmptyName,
    #[error("alias {alias:?} is owned by both {first} and {second}")]
    AliasConflict {
        alias: String,
        first: EntityId,
        second: EntityId,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("entity {0} was merged and is no longer live")]
    MergedEntity(EntityId),
    #[error("unknown relation {0}")]
    UnknownRelation(RelationId),
    #[error("{kind} requires {expected:?} endpoints, got ({source_kind}, {target_kind})")]
    EndpointKindMismatch {
        kind: RelationKind,
        expected: (EntityKind, EntityKind),
        source_kind: EntityKind,
        target_kind: EntityKind,
    },
    #[error("relation has no evidence")]
    NoEvidence,
    #[error("relation would connect {0} to itself")]
    SelfLoop(EntityId),
    #[error("cannot merge a {0} into a {1}")]
    KindMismatch(EntityKind, EntityKind),
    #[error("cannot merge {0} into itself")]
    SelfMerge(EntityId),
    #[error("entity {0} is already merged into {1}")]
    AlreadyMerged(EntityId, EntityId),
    #[error("relation {id} is {status:?}, expected Extracted")]
    NotExtracted { id: RelationId, status: RelationStatus },
    #[error("{0} cannot be direction-flipped")]
    IllegalFlip(RelationKind),
}

/// How entity names are keyed for alias uniqueness and lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasPolicy {
    /// Trimmed surface form, case-sensitive.
    Exact,
    /// Case-folded, whitespace-collapsed, typography-normalized.
    #[default]
    CaseFold,
}

impl AliasPolicy {
    pub fn key(self, name: &str) -> String {
        match self {
            AliasPolicy::Exact => name.trim().to_string(),
            AliasPolicy::CaseFold => fold(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityUpsert {
    pub id: EntityId,
    pub created: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationUpsert {
    pub id: RelationId,
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergeReport {
    pub survivor: EntityId,
    pub absorbed: EntityId,
    /// Relations whose endpoint was rewritten to the survivor.
    pub rewired: Vec<RelationId>,
    /// `(removed, kept)`: relations made identical by the rewrite, evidence moved into `kept`.
    pub coalesced: Vec<(RelationId, RelationId)>,
    /// Relations between the two merged entities; removed together with their evidence.
    pub dropped_self_loops: Vec<RelationId>,
    pub dropped_evidence: usize,
    pub noop: bool,
}

/// Filter for [`GraphStore::subgraph`]. `None` fields do not filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphFilter {
    pub relation_kinds: Option<BTreeSet<RelationKind>>,
    pub jurisdictions: Option<BTreeSet<String>>,
    pub statuses: Option<BTreeSet<RelationStatus>>,
    pub entity_kinds: Option<BTreeSet<EntityKind>>,
}

impl SubgraphFilter {
    pub fn relation_kinds(mut self, kinds: impl IntoIterator<Item = RelationKind>) -> Self {
        self.relation_kinds = Some(kinds.into_iter().collect());
        self
    }

    pub fn jurisdictions<S: Into<String>>(mut self, codes: impl IntoIterator<Item = S>) -> Self {
        self.jurisdictions = Some(codes.into_iter().map(Into::into).collect());
        self
    }

    pub fn statuses(mut self, statuses: impl IntoIterator<Item = RelationStatus>) -> Self {
        self.statuses = Some(statuses.into_iter().collect());
        self
    }

    pub fn entity_kinds(mut self, kinds: impl IntoIterator<Item = EntityKind>) -> Self {
        self.entity_kinds = Some(kinds.into_iter().collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewNode {
    pub id: EntityId,
    pub kind: EntityKind,
    pub name: String,
    pub jurisdiction: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEdge {
    pub id: RelationId,
    pub kind: RelationKind,
    pub status: RelationStatus,
    pub source: EntityId,
    pub target: EntityId,
}

/// An immutable induced subgraph, detached from the store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphView {
    pub nodes: Vec<ViewNode>,
    pub edges: Vec<ViewEdge>,
}

impl GraphView {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: EntityId) -> Option<&ViewNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }
}

#[derive(Debug, Clone, Default)]
pub struct GraphStore {
    policy: AliasPolicy,
    pub(crate) entities: BTreeMap<EntityId, Entity>,
    pub(crate) relations: BTreeMap<RelationId, Relation>,
    alias_index: BTreeMap<(EntityKind, String), EntityId>,
    edge_index: BTreeMap<(RelationKind, EntityId, EntityId), RelationId>,
    pub(crate) next_entity: u64,
    pub(crate) next_relation: u64,
}

impl GraphStore {
    pub fn new(policy: AliasPolicy) -> Self {
        GraphStore {
            policy,
            next_entity: 1,
            next_relation: 1,
            ..Default::default()
        }
    }

    pub fn alias_policy(&self) -> AliasPolicy {
        self.policy
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(&id)
    }

    /// All entities, tombstones included, in id order.
    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn live_entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(|e| e.is_live())
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn relations_of(&self, id: EntityId) -> impl Iterator<Item = &Relation> {
        self.relations.values().filter(move |r| r.touches(id))
    }

    pub fn degree(&self, id: EntityId) -> usize {
        self.relations_of(id).count()
    }

    pub fn find_relation(
        &self,
        kind: RelationKind,
        source: EntityId,
        target: EntityId,
    ) -> Option<RelationId> {
        self.edge_index.get(&(kind, source, target)).copied()
    }

    /// Follow `merged_into` to the live entity. Terminates in at most `entity count` steps.
    pub fn resolve(&self, id: EntityId) -> Option<EntityId> {
        let mut cur = id;
        for _ in 0..=self.entities.len() {
            let e = self.entities.get(&cur)?;
            match e.merged_into {
                None => return Some(cur),
                Some(next) => cur = next,
            }
        }
        None
    }

    /// Live entity of `kind` owning `name` under the store's alias policy.
    pub fn lookup(&self, kind: EntityKind, name: &str) -> Option<EntityId> {
        self.alias_index.get(&(kind, self.policy.key(name))).copied()
    }

    /// Live entity of any kind owning `name`; `Company` wins when several kinds match.
    pub fn lookup_any(&self, name: &str) -> Option<EntityId> {
        let key = self.policy.key(name);
        EntityKind::ALL
            .into_iter()
            .find_map(|k| self.alias_index.get(&(k, key.clone())).copied())
    }

    fn live(&self, id: EntityId) -> Result<&Entity, GraphError> {
        let e = self.entities.get(&id).ok_or(GraphError::UnknownEntity(id))?;
        if !e.is_live() {
            return Err(GraphError::MergedEntity(id));
        }
        Ok(e)
    }

    pub(crate) fn upsert_entity(
        &mut self,
        kind: EntityKind,
        name: &str,
        aliases: &[String],
        jurisdiction: Option<&str>,
        at: Timestamp,
    ) -> Result<EntityUpsert, GraphError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(GraphError::EmptyName);
        }
        let mut surface: Vec<String> = Vec::with_capacity(aliases.len() + 1);
        for s in core::iter::once(name).chain(aliases.iter().map(String::as_str)) {
            let s = s.trim();
            if !s.is_empty() && !surface.iter().any(|x| x == s) {
                surface.push(s.to_string());
            }
        }

        let mut owner: Option<EntityId> = None;
        for s in &surface {
            if let Some(&id) = self.alias_index.get(&(kind, self.policy.key(s))) {
                match owner {
                    Some(o) if o != id => {
                        return Err(GraphError::AliasConflict {
                            alias: s.clone(),
                            first: o,
                            second: id,
                        })
                    }
                    _ => owner = Some(id),
                }
            }
        }

        let jurisdiction = jurisdiction
            .map(str::trim)
            .filter(|j| !j.is_empty())
            .map(|j| j.to_ascii_uppercase());

        let (id, created) = match owner {
            Some(id) => (id, false),
            None => {
                let id = EntityId(self.next_entity);
                self.next_entity += 1;
                self.entities.insert(
                    id,
                    Entity {
                        id,
                        kind,
                        canonical_name: name.to_string(),
                        aliases: Vec::new(),
                        jurisdiction: None,
                        created_at: at,
                        merged_into: None,
                    },
                );
                (id, true)
            }
        };

        let policy = self.policy;
        let entity = self.entities.get_mut(&id).expect("owner exists");
        for s in surface {
            if !entity.aliases.contains(&s) {
                entity.aliases.push(s.clone());
            }
            self.alias_index.insert((kind, policy.key(&s)), id);
        }
        if entity.jurisdiction.is_none() {
            entity.jurisdiction = jurisdiction;
        }
        Ok(EntityUpsert { id, created })
    }

    pub(crate) fn upsert_relation(
        &mut self,
        kind: RelationKind,
        source: EntityId,
        target: EntityId,
        evidence: &[Evidence],
        attributes: &Attributes,
        at: Timestamp,
    ) -> Result<RelationUpsert, GraphError> {
        let sk = self.live(source)?.kind;
        let tk = self.live(target)?.kind;
        if !kind.accepts(sk, tk) {
            return Err(GraphError::EndpointKindMismatch {
                kind,
                expected: kind.endpoint_kinds(),
                source_kind: sk,
                target_kind: tk,
            });
        }
        if source == target {
            return Err(GraphError::SelfLoop(source));
        }
        if evidence.is_empty() {
            return Err(GraphError::NoEvidence);
        }

        if let Some(&id) = self.edge_index.get(&(kind, source, target)) {
            let rel = self.relations.get_mut(&id).expect("indexed relation exists");
            for ev in evidence {
                if !rel.evidence.iter().any(|e| e.same_span(ev)) {
                    rel.evidence.push(ev.clone());
                }
            }
            merge_attributes(&mut rel.attributes, attributes);
            rel.last_seen = rel.last_seen.max(at);
            return Ok(RelationUpsert { id, created: false });
        }

        let id = RelationId(self.next_relation);
        self.next_relation += 1;
        let mut deduped: Vec<Evidence> = Vec::with_capacity(evidence.len());
        for ev in evidence {
            if !deduped.iter().any(|e| e.same_span(ev)) {
                deduped.push(ev.clone());
            }
        }
        self.relations.insert(
            id,
            Relation {
                id,
                kind,
                source,
                target,
                evidence: deduped,
                status: RelationStatus::Extracted,
                attributes: attributes.clone(),
                first_seen: at,
                last_seen: at,
                verification: None,
            },
        );
        self.edge_index.insert((kind, source, target), id);
        Ok(RelationUpsert { id, created: true })
    }

    pub(crate) fn merge_entities(
        &mut self,
        survivor: EntityId,
        absorbed: EntityId,
    ) -> Result<MergeReport, GraphError> {
        if survivor == absorbed {
            return Err(GraphError::SelfMerge(survivor));
        }
        let s = self
            .entities
            .get(&survivor)
            .ok_or(GraphError::UnknownEntity(survivor))?;
        let a = self
            .entities
            .get(&absorbed)
            .ok_or(GraphError::UnknownEntity(absorbed))?;
        if a.merged_into == Some(survivor) {
            return Ok(MergeReport {
                survivor,
                absorbed,
                noop: true,
                ..Default::default()
            });
        }
        if let Some(into) = s.merged_into {
            return Err(GraphError::AlreadyMerged(survivor, into));
        }
        if let Some(into) = a.merged_into {
            return Err(GraphError::AlreadyMerged(absorbed, into));
        }
        if s.kind != a.kind {
            return Err(GraphError::KindMismatch(a.kind, s.kind));
        }

        let kind = s.kind;
        let absorbed_aliases = a.aliases.clone();
        let absorbed_jurisdiction = a.jurisdiction.clone();
        {
            let s = self.entities.get_mut(&survivor).expect("checked");
            for alias in &absorbed_aliases {
                if !s.aliases.contains(alias) {
                    s.aliases.push(alias.clone());
                }
            }
            if s.jurisdiction.is_none() {
                s.jurisdiction = absorbed_jurisdiction;
            }
        }
        for alias in &absorbed_aliases {
            self.alias_index
                .insert((kind, self.policy.key(alias)), survivor);
        }
        self.entities
            .get_mut(&absorbed)
            .expect("checked")
            .merged_into = Some(survivor);

        let mut report = MergeReport {
            survivor,
            absorbed,
            ..Default::default()
        };
        let touching: Vec<RelationId> = self
            .relations
            .values()
            .filter(|r| r.touches(absorbed))
            .map(|r| r.id)
            .collect();
        for id in touching {
            let mut rel = self.relations.remove(&id).expect("listed");
            self.edge_index.remove(&(rel.kind, rel.source, rel.target));
            if rel.source == absorbed {
                rel.source = survivor;
            }
            if rel.target == absorbed {
                rel.target = survivor;
            }
            if rel.source == rel.target {
                report.dropped_evidence += rel.evidence.len();
                report.dropped_self_loops.push(id);
                continue;
            }
            let key = (rel.kind, rel.source, rel.target);
            if let Some(&kept) = self.edge_index.get(&key) {
                let into = self.relations.get_mut(&kept).expect("indexed");
                for ev in rel.evidence {
                    if !into.evidence.iter().any(|e| e.same_span(&ev)) {
                        into.evidence.push(ev);
                    }
                }
                merge_attributes(&mut into.attributes, &rel.attributes);
                into.first_seen = into.first_seen.min(rel.first_seen);
                into.last_seen = into.last_seen.max(rel.last_seen);
                if rel.status.precedence() > into.status.precedence() {
                    into.status = rel.status;
                    into.verification = rel.verification;
                }
                report.coalesced.push((id, kept));
            } else {
                self.edge_index.insert(key, id);
                self.relations.insert(id, rel);
                report.rewired.push(id);
            }
        }
        Ok(report)
    }

    /// Record a verification verdict. Only `Extracted` relations may be judged.
    pub(crate) fn judge_relation(
        &mut self,
        id: RelationId,
        mut record: VerificationRecord,
    ) -> Result<(), GraphError> {
        let rel = self
            .relations
            .get(&id)
            .ok_or(GraphError::UnknownRelation(id))?;
        if rel.status != RelationStatus::Extracted {
            return Err(GraphError::NotExtracted {
                id,
                status: rel.status,
            });
        }
        match record.outcome {
            VerdictOutcome::Accept => {
                let rel = self.relations.get_mut(&id).expect("checked");
                rel.status = RelationStatus::Verified;
                rel.verification = Some(record);
            }
            VerdictOutcome::Reject => {
                let rel = self.relations.get_mut(&id).expect("checked");
                rel.status = RelationStatus::Rejected;
                rel.verification = Some(record);
            }
            VerdictOutcome::FlipDirection => {
                if !rel.kind.direction_flippable() {
                    return Err(GraphError::IllegalFlip(rel.kind));
                }
                let (kind, source, target) = (rel.kind, rel.source, rel.target);
                if let Some(&existing) = self.edge_index.get(&(kind, target, source)) {
                    // The corrected edge already exists: hand over the evidence and
                    // retire this one as Rejected so the edge count is unchanged.
                    let moved = self.relations.get(&id).expect("checked").evidence.clone();
                    let other = self.relations.get_mut(&existing).expect("indexed");
                    for ev in moved {
                        if !other.evidence.iter().any(|e| e.same_span(&ev)) {
                            other.evidence.push(ev);
                        }
                    }
                    record.duplicate_of = Some(existing);
                    let rel = self.relations.get_mut(&id).expect("checked");
                    rel.status = RelationStatus::Rejected;
                    rel.verification = Some(record);
                } else {
                    self.edge_index.remove(&(kind, source, target));
                    self.edge_index.insert((kind, target, source), id);
                    let rel = self.relations.get_mut(&id).expect("checked");
                    core::mem::swap(&mut rel.source, &mut rel.target);
                    rel.status = RelationStatus::Verified;
                    rel.verification = Some(record);
                }
            }
        }
        Ok(())
    }

    pub fn subgraph(&self, filter: &SubgraphFilter) -> GraphView {
        let nodes: Vec<ViewNode> = self
            .live_entities()
            .filter(|e| {
                filter
                    .entity_kinds
                    .as_ref()
                    .is_none_or(|ks| ks.contains(&e.kind))
            })
            .filter(|e| {
                filter.jurisdictions.as_ref().is_none_or(|js| {
                    e.jurisdiction.as_ref().is_some_and(|j| js.contains(j))
                })
            })
            .map(|e| ViewNode {
                id: e.id,
                kind: e.kind,
                name: e.canonical_name.clone(),
                jurisdiction: e.jurisdiction.clone(),
            })
            .collect();
        let keep: BTreeSet<EntityId> = nodes.iter().map(|n| n.id).collect();
        let edges = self
            .relations
            .values()
            .filter(|r| {
                filter
                    .relation_kinds
                    .as_ref()
                    .is_none_or(|ks| ks.contains(&r.kind))
            })
            .filter(|r| filter.statuses.as_ref().is_none_or(|s| s.contains(&r.status)))
            .filter(|r| keep.contains(&r.source) && keep.contains(&r.target))
            .map(|r| ViewEdge {
                id: r.id,
                kind: r.kind,
                status: r.status,
                source: r.source,
                target: r.target,
            })
            .collect();
        GraphView { nodes, edges }
    }

    /// Rebuild indexes and check integrity after bulk loading.
    pub(crate) fn from_parts(
        policy: AliasPolicy,
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        next_entity: u64,
        next_relation: u64,
    ) -> Result<Self, String> {
        use alloc::format;
        let mut store = GraphStore::new(policy);
        for e in entities {
            if e.canonical_name.trim().is_empty() {
                return Err(format!("{} has an empty canonical name", e.id));
            }
            if !e.aliases.contains(&e.canonical_name) {
                return Err(format!("{} canonical name missing from aliases", e.id));
            }
            if store.entities.insert(e.id, e).is_some() {
                return Err("duplicate entity id".to_string());
            }
        }
        for e in store.entities.values() {
            if let Some(into) = e.merged_into {
                if !store.entities.contains_key(&into) {
                    return Err(format!("{} merged into missing {}", e.id, into));
                }
            }
        }
        for id in store.entities.keys() {
            if store.resolve(*id).is_none() {
                return Err(format!("merge chain from {} does not terminate", id));
            }
        }
        let mut index = BTreeMap::new();
        // live owners first, then tombstones forward to their survivor
        for e in store.entities.values().filter(|e| e.is_live()) {
            for alias in &e.aliases {
                if let Some(prev) = index.insert((e.kind, policy.key(alias)), e.id) {
                    if prev != e.id {
                        return Err(format!(
                            "alias {:?} owned by both {} and {}",
                            alias, prev, e.id
                        ));
                    }
                }
            }
        }
        store.alias_index = index;

        for r in relations {
            let (s, t) = match (store.entities.get(&r.source), store.entities.get(&r.target)) {
                (Some(s), Some(t)) => (s, t),
                _ => return Err(format!("{} has a dangling endpoint", r.id)),
            };
            if !s.is_live() || !t.is_live() {
                return Err(format!("{} points at a merged entity", r.id));
            }
            if !r.kind.accepts(s.kind, t.kind) {
                return Err(format!("{} violates the {} endpoint kinds", r.id, r.kind));
            }
            if r.evidence.is_empty() {
                return Err(format!("{} has no evidence", r.id));
            }
            if r.source == r.target {
                return Err(format!("{} is a self-loop", r.id));
            }
            if store
                .edge_index
                .insert((r.kind, r.source, r.target), r.id)
                .is_some()
            {
                return Err(format!("{} duplicates an existing relation key", r.id));
            }
            if store.relations.insert(r.id, r).is_some() {
                return Err("duplicate relation id".to_string());
            }
        }

        let max_e = store.entities.keys().next_back().map_or(0, |i| i.0);
        let max_r = store.relations.keys().next_back().map_or(0, |i| i.0);
        if next_entity <= max_e || next_relation <= max_r {
            return Err("id counters behind stored ids".to_string());
        }
        store.next_entity = next_entity;
        store.next_relation = next_relation;
        Ok(store)
    }
}
