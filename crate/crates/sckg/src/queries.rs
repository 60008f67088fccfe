//! Read models and review actions shared by the HTTP API and the CLI.

use std::collections::{BTreeMap, BTreeSet};

use sckg_core::graph::{GraphStore, GraphView, ViewEdge, ViewNode};
use sckg_core::model::{Entity, EntityId, EntityKind, Relation, RelationId, RelationKind, Timestamp};
use sckg_core::normalize::fold;
use sckg_core::resolution::{
    apply_review_decision, neighbor_summary, CandidateState, Decision, PairKey, ResolutionError,
    ReviewOutcome, SynonymCandidate,
};
use sckg_core::KnowledgeBase;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;
pub const MAX_DEPTH: u32 = 3;

pub fn page_size(limit: Option<usize>) -> usize {
    limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    /// Pass back as `cursor` for the next page; absent on the last page.
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySummary {
    pub id: EntityId,
    pub kind: EntityKind,
    pub name: String,
    pub aliases: Vec<String>,
    pub jurisdiction: Option<String>,
    pub degree: usize,
}

fn summary(graph: &GraphStore, e: &Entity) -> EntitySummary {
    EntitySummary {
        id: e.id,
        kind: e.kind,
        name: e.canonical_name.clone(),
        aliases: e.aliases.clone(),
        jurisdiction: e.jurisdiction.clone(),
        degree: graph.degree(e.id),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityQuery {
    /// Case-insensitive substring of any alias.
    pub q: Option<String>,
    pub kind: Option<EntityKind>,
    pub jurisdiction: Option<String>,
    /// Id of the last entity on the previous page.
    pub cursor: Option<EntityId>,
    pub limit: Option<usize>,
}

/// Live entities in id order.
pub fn list_entities(graph: &GraphStore, query: &EntityQuery) -> Page<EntitySummary> {
    let needle = query.q.as_deref().map(fold).filter(|q| !q.is_empty());
    let limit = page_size(query.limit);
    let mut hits = graph
        .live_entities()
        .filter(|e| query.cursor.is_none_or(|c| e.id > c))
        .filter(|e| query.kind.is_none_or(|k| e.kind == k))
        .filter(|e| {
            query
                .jurisdiction
                .as_deref()
                .is_none_or(|j| e.jurisdiction.as_deref().is_some_and(|x| x.eq_ignore_ascii_case(j)))
        })
        .filter(|e| {
            needle
                .as_deref()
                .is_none_or(|n| e.aliases.iter().any(|a| fold(a).contains(n)))
        });
    let items: Vec<EntitySummary> = hits.by_ref().take(limit).map(|e| summary(graph, e)).collect();
    let next_cursor = match (items.last(), hits.next()) {
        (Some(last), Some(_)) => Some(last.id.to_string()),
        _ => None,
    };
    Page { items, next_cursor }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionCounts {
    pub outgoing: usize,
    pub incoming: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDetail {
    pub entity: Entity,
    pub degree: usize,
    pub relations_by_kind: BTreeMap<RelationKind, DirectionCounts>,
}

/// Merged ids answer with the absorbed record; its `merged_into` points on.
pub fn entity_detail(graph: &GraphStore, id: EntityId) -> Option<EntityDetail> {
    let e = graph.entity(id)?;
    let mut by_kind: BTreeMap<RelationKind, DirectionCounts> = BTreeMap::new();
    for r in graph.relations_of(id) {
        let c = by_kind.entry(r.kind).or_default();
        if r.source == id {
            c.outgoing += 1;
        }
        if r.target == id {
            c.incoming += 1;
        }
    }
    Some(EntityDetail {
        entity: e.clone(),
        degree: graph.degree(id),
        relations_by_kind: by_kind,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub center: EntityId,
    pub depth: u32,
    pub nodes: Vec<ViewNode>,
    pub edges: Vec<ViewEdge>,
}

/// Entities within `depth` hops over relations of `kinds` (any kind when
/// empty), and every such relation among them. Depth is capped at 3.
pub fn neighborhood(graph: &GraphStore, center: EntityId, depth: u32, kinds: &BTreeSet<RelationKind>) -> Option<Neighborhood> {
    let center = graph.resolve(center)?;
    let depth = depth.min(MAX_DEPTH);
    let allowed = |r: &Relation| kinds.is_empty() || kinds.contains(&r.kind);
    let mut seen: BTreeSet<EntityId> = BTreeSet::from([center]);
    let mut layer = vec![center];
    for _ in 0..depth {
        let mut next = Vec::new();
        for id in layer {
            for r in graph.relations_of(id).filter(|r| allowed(r)) {
                let other = if r.source == id { r.target } else { r.source };
                if seen.insert(other) {
                    next.push(other);
                }
            }
        }
        layer = next;
    }
    let view = GraphView {
        nodes: seen
            .iter()
            .filter_map(|id| graph.entity(*id))
            .map(|e| ViewNode {
                id: e.id,
                kind: e.kind,
                name: e.canonical_name.clone(),
                jurisdiction: e.jurisdiction.clone(),
            })
            .collect(),
        edges: graph
            .relations()
            .filter(|r| allowed(r) && seen.contains(&r.source) && seen.contains(&r.target))
            .map(|r| ViewEdge {
                id: r.id,
                kind: r.kind,
                status: r.status,
                source: r.source,
                target: r.target,
            })
            .collect(),
    };
    Some(Neighborhood {
        center,
        depth,
        nodes: view.nodes,
        edges: view.edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDetail {
    pub relation: Relation,
    pub source_name: String,
    pub target_name: String,
}

pub fn relation_detail(graph: &GraphStore, id: RelationId) -> Option<RelationDetail> {
    let r = graph.relation(id)?;
    let name = |e| graph.entity(e).map_or_else(String::new, |e| e.canonical_name.clone());
    Some(RelationDetail {
        relation: r.clone(),
        source_name: name(r.source),
        target_name: name(r.target),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSide {
    pub id: EntityId,
    pub name: String,
    pub aliases: Vec<String>,
    pub jurisdiction: Option<String>,
    pub relations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCard {
    pub pair: PairKey,
    #[serde(flatten)]
    pub candidate: SynonymCandidate,
    pub entity_a: Option<ReviewSide>,
    pub entity_b: Option<ReviewSide>,
}

const NEIGHBOR_LINES: usize = 10;

fn side(graph: &GraphStore, id: EntityId) -> Option<ReviewSide> {
    let e = graph.entity(id)?;
    Some(ReviewSide {
        id,
        name: e.canonical_name.clone(),
        aliases: e.aliases.clone(),
        jurisdiction: e.jurisdiction.clone(),
        relations: neighbor_summary(graph, id, NEIGHBOR_LINES),
    })
}

/// AwaitingReview candidates in pair order.
pub fn review_queue(kb: &KnowledgeBase, cursor: Option<PairKey>, limit: Option<usize>) -> Page<ReviewCard> {
    let g = kb.graph();
    let limit = page_size(limit);
    let mut hits = kb
        .candidates()
        .filter(|c| c.state == CandidateState::AwaitingReview)
        .filter(|c| cursor.is_none_or(|p| c.pair > p));
    let items: Vec<ReviewCard> = hits
        .by_ref()
        .take(limit)
        .map(|c| ReviewCard {
            pair: c.pair,
            candidate: c.clone(),
            entity_a: side(g, c.pair.a()),
            entity_b: side(g, c.pair.b()),
        })
        .collect();
    let next_cursor = match (items.last(), hits.next()) {
        (Some(last), Some(_)) => Some(last.pair.to_string()),
        _ => None,
    };
    Page { items, next_cursor }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewResponse {
    pub pair: PairKey,
    pub decision: Decision,
    /// True when the same decision was already in effect.
    pub noop: bool,
    pub outcome: ReviewOutcome,
    pub state: CandidateState,
}

pub fn decide(
    kb: &mut KnowledgeBase,
    pair: PairKey,
    decision: Decision,
    reviewer: &str,
    at: Timestamp,
) -> Result<ReviewResponse, ResolutionError> {
    let outcome = apply_review_decision(kb, pair, decision, reviewer, at)?;
    let state = kb.candidate(pair).map_or(CandidateState::Approved, |c| c.state);
    Ok(ReviewResponse {
        pair,
        decision,
        noop: outcome == ReviewOutcome::Unchanged,
        outcome,
        state,
    })
}

/// One past the latest timestamp recorded in `kb`. Commands outside a mining
/// run use this as their logical time so repeated runs stay reproducible.
pub fn next_logical_time(kb: &KnowledgeBase) -> Timestamp {
    let g = kb.graph();
    let mut t = 0;
    for e in g.entities() {
        t = t.max(e.created_at.0);
    }
    for r in g.relations() {
        t = t.max(r.last_seen.0);
        if let Some(v) = &r.verification {
            t = t.max(v.judged_at.0);
        }
    }
    for d in kb.decisions() {
        t = t.max(d.decided_at.0);
    }
    Timestamp(t + 1)
}
