//! Synonym discovery and review.
//!
//! Candidates come from two generators: entities sharing typed neighbors
//! with similar names, and entities whose name embeddings are close. Each
//! candidate is judged by the language model; a positive verdict waits for a
//! human unless auto-approve is on. Merges and keep-separate decisions are
//! recorded in an append-only decision log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::GraphStore;
use crate::kb::{Applied, KbError, KnowledgeBase, Mutation};
use crate::model::{Entity, EntityId, ParseIdError, RelationKind, RelationStatus, Timestamp};
use crate::normalize::NameNormalizer;
use crate::provider::{call_structured, CallError, CompletionRequest, Embedder, LlmProvider, ProviderError};
use crate::similarity::{cosine, name_similarity};

/// Unordered entity pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PairKey(EntityId, EntityId);

impl PairKey {
    pub fn new(x: EntityId, y: EntityId) -> Self {
        if x <= y {
            PairKey(x, y)
        } else {
            PairKey(y, x)
        }
    }

    pub fn a(self) -> EntityId {
        self.0
    }

    pub fn b(self) -> EntityId {
        self.1
    }

    pub fn contains(self, id: EntityId) -> bool {
        self.0 == id || self.1 == id
    }

    pub fn other(self, id: EntityId) -> Option<EntityId> {
        if self.0 == id {
            Some(self.1)
        } else if self.1 == id {
            Some(self.0)
        } else {
            None
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl FromStr for PairKey {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (x, y) = s.split_once('-').ok_or(ParseIdError)?;
        Ok(PairKey::new(x.parse()?, y.parse()?))
    }
}

impl From<PairKey> for String {
    fn from(p: PairKey) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PairKey {
    type Error = ParseIdError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    RelationMatch,
    EmbeddingMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateState {
    Pending,
    AutoVerified,
    AwaitingReview,
    Approved,
    #[serde(rename = "rejected_by_llm")]
    RejectedByLlm,
    RejectedByHuman,
}

impl CandidateState {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateState::Pending => "pending",
            CandidateState::AutoVerified => "auto_verified",
            CandidateState::AwaitingReview => "awaiting_review",
            CandidateState::Approved => "approved",
            CandidateState::RejectedByLlm => "rejected_by_llm",
            CandidateState::RejectedByHuman => "rejected_by_human",
        }
    }

    /// How decisive a state is; used when two candidates collapse into one pair.
    pub(crate) fn rank(self) -> u8 {
        match self {
            CandidateState::Pending => 0,
            CandidateState::AwaitingReview => 1,
            CandidateState::RejectedByLlm => 2,
            CandidateState::AutoVerified => 3,
            CandidateState::Approved => 4,
            CandidateState::RejectedByHuman => 5,
        }
    }
}

impl FromStr for CandidateState {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            CandidateState::Pending,
            CandidateState::AutoVerified,
            CandidateState::AwaitingReview,
            CandidateState::Approved,
            CandidateState::RejectedByLlm,
            CandidateState::RejectedByHuman,
        ]
        .into_iter()
        .find(|st| st.as_str().eq_ignore_ascii_case(s))
        .ok_or(ParseIdError)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub is_synonym: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymCandidate {
    pub pair: PairKey,
    pub sources: BTreeSet<CandidateSource>,
    pub name_similarity: f64,
    #[serde(default)]
    pub embedding_similarity: Option<f64>,
    #[serde(default)]
    pub shared_neighbors: usize,
    #[serde(default)]
    pub llm_verdict: Option<LlmVerdict>,
    pub state: CandidateState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Merge,
    KeepSeparate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    Llm,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymDecision {
    pub pair: PairKey,
    pub decision: Decision,
    pub decided_by: DecidedBy,
    #[serde(default)]
    pub reviewer: Option<String>,
    /// Set when a merge was executed; the other end of `pair` was absorbed.
    #[serde(default)]
    pub survivor: Option<EntityId>,
    pub decided_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionConfig {
    /// Minimum shared `(relation kind, direction, neighbor)` keys.
    pub min_shared_neighbors: usize,
    /// Name-similarity gate for relation matches.
    pub name_threshold: f64,
    /// Embedding cosine threshold.
    pub embedding_threshold: f64,
    pub repair_retries: u32,
    pub auto_approve: bool,
    pub neighbor_context: usize,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            min_shared_neighbors: 1,
            name_threshold: 0.6,
            embedding_threshold: 0.85,
            repair_retries: 2,
            auto_approve: false,
            neighbor_context: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolutionError {
    #[error("no synonym candidate for pair {0}")]
    UnknownPair(PairKey),
    #[error("pair {pair} is {state:?}; the requested transition does not apply")]
    StaleState { pair: PairKey, state: CandidateState },
    #[error(transparent)]
    Call(#[from] CallError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Direction {
    Out,
    In,
}

/// Candidates from shared typed neighbors, gated by name similarity.
/// Ordered by shared-neighbor count descending, then pair.
pub fn candidates_by_relation(
    graph: &GraphStore,
    normalizer: &NameNormalizer,
    blocked: &BTreeSet<PairKey>,
    config: &ResolutionConfig,
) -> Vec<SynonymCandidate> {
    let mut members: BTreeMap<(RelationKind, Direction, EntityId), BTreeSet<EntityId>> =
        BTreeMap::new();
    for r in graph.relations() {
        if r.status == RelationStatus::Rejected {
            continue;
        }
        members
            .entry((r.kind, Direction::Out, r.target))
            .or_default()
            .insert(r.source);
        members
            .entry((r.kind, Direction::In, r.source))
            .or_default()
            .insert(r.target);
    }
    let mut shared: BTreeMap<PairKey, usize> = BTreeMap::new();
    for ids in members.values() {
        let ids: Vec<EntityId> = ids.iter().copied().collect();
        for (i, x) in ids.iter().enumerate() {
            for y in &ids[i + 1..] {
                *shared.entry(PairKey::new(*x, *y)).or_default() += 1;
            }
        }
    }
    let mut out: Vec<SynonymCandidate> = shared
        .into_iter()
        .filter(|(pair, n)| *n >= config.min_shared_neighbors.max(1) && !blocked.contains(pair))
        .filter_map(|(pair, n)| {
            let (ea, eb) = live_pair(graph, pair)?;
            if ea.kind != eb.kind {
                return None;
            }
            let sim = name_similarity(normalizer, &ea.aliases, &eb.aliases);
            (sim >= config.name_threshold).then(|| SynonymCandidate {
                pair,
                sources: [CandidateSource::RelationMatch].into_iter().collect(),
                name_similarity: sim,
                embedding_similarity: None,
                shared_neighbors: n,
                llm_verdict: None,
                state: CandidateState::Pending,
            })
        })
        .collect();
    out.sort_by(|x, y| {
        y.shared_neighbors
            .cmp(&x.shared_neighbors)
            .then(x.pair.cmp(&y.pair))
    });
    out
}

fn live_pair(graph: &GraphStore, pair: PairKey) -> Option<(&Entity, &Entity)> {
    let a = graph.entity(pair.a()).filter(|e| e.is_live())?;
    let b = graph.entity(pair.b()).filter(|e| e.is_live())?;
    Some((a, b))
}

/// Candidates from embedding cosine over canonical names, in pair order.
pub fn candidates_by_embedding<E: Embedder + ?Sized>(
    graph: &GraphStore,
    embedder: &E,
    normalizer: &NameNormalizer,
    blocked: &BTreeSet<PairKey>,
    config: &ResolutionConfig,
) -> Result<Vec<SynonymCandidate>, ProviderError> {
    let live: Vec<&Entity> = graph.live_entities().collect();
    let mut vectors = Vec::with_capacity(live.len());
    for e in &live {
        vectors.push(embedder.embed(&e.canonical_name)?);
    }
    let mut out = Vec::new();
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            let (ea, eb) = (live[i], live[j]);
            let pair = PairKey::new(ea.id, eb.id);
            if ea.kind != eb.kind || blocked.contains(&pair) {
                continue;
            }
            let cos = cosine(&vectors[i], &vectors[j]);
            if cos >= config.embedding_threshold {
                out.push(SynonymCandidate {
                    pair,
                    sources: [CandidateSource::EmbeddingMatch].into_iter().collect(),
                    name_similarity: name_similarity(normalizer, &ea.aliases, &eb.aliases),
                    embedding_similarity: Some(cos),
                    shared_neighbors: 0,
                    llm_verdict: None,
                    state: CandidateState::Pending,
                });
            }
        }
    }
    out.sort_by_key(|c| c.pair);
    Ok(out)
}

/// Merge fresh candidates into the table. Known pairs keep their state and
/// only gain sources and scores. Returns the number of records written.
pub fn propose(kb: &mut KnowledgeBase, fresh: Vec<SynonymCandidate>) -> Result<usize, KbError> {
    let blocked = kb.blocked_pairs();
    let mut merged: BTreeMap<PairKey, SynonymCandidate> = BTreeMap::new();
    for c in fresh {
        if blocked.contains(&c.pair) || c.pair.a() == c.pair.b() {
            continue;
        }
        match merged.get_mut(&c.pair) {
            Some(m) => absorb(m, &c),
            None => {
                merged.insert(c.pair, c);
            }
        }
    }
    let mut written = 0;
    for (pair, c) in merged {
        let next = match kb.candidate(pair) {
            Some(existing) => {
                let mut next = existing.clone();
                absorb(&mut next, &c);
                if &next == existing {
                    continue;
                }
                next
            }
            None => c,
        };
        kb.apply(Mutation::PutCandidate { candidate: next })?;
        written += 1;
    }
    Ok(written)
}

fn absorb(into: &mut SynonymCandidate, from: &SynonymCandidate) {
    into.sources.extend(from.sources.iter().copied());
    into.name_similarity = into.name_similarity.max(from.name_similarity);
    into.embedding_similarity = match (into.embedding_similarity, from.embedding_similarity) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    };
    into.shared_neighbors = into.shared_neighbors.max(from.shared_neighbors);
}

/// Short descriptions of an entity's relations, e.g. `Supply -> SMIC`.
pub fn neighbor_summary(graph: &GraphStore, id: EntityId, limit: usize) -> Vec<String> {
    let name = |id| {
        graph
            .entity(id)
            .map_or_else(|| id.to_string(), |e| e.canonical_name.clone())
    };
    let mut lines: Vec<String> = graph
        .relations_of(id)
        .filter(|r| r.status != RelationStatus::Rejected)
        .map(|r| {
            if r.source == id {
                format!("{} -> {}", r.kind, name(r.target))
            } else {
                format!("{} <- {}", r.kind, name(r.source))
            }
        })
        .collect();
    lines.sort();
    lines.dedup();
    lines.truncate(limit);
    lines
}

pub const SYNONYM_INSTRUCTION: &str = "You decide whether two entity records from a supply chain \
knowledge graph name the same real-world entity. Use the names, aliases and the relationships \
listed for each. Answer with a JSON object {\"is_synonym\": boolean, \"rationale\": string}.";

pub fn synonym_request(
    graph: &GraphStore,
    pair: PairKey,
    context: usize,
) -> Option<CompletionRequest> {
    let (a, b) = live_pair(graph, pair)?;
    let describe = |e: &Entity| {
        json!({
            "id": e.id.to_string(),
            "kind": e.kind.as_str(),
            "name": e.canonical_name,
            "aliases": e.aliases,
            "jurisdiction": e.jurisdiction,
            "relations": neighbor_summary(graph, e.id, context),
        })
    };
    let input = json!({ "entity_a": describe(a), "entity_b": describe(b) });
    Some(CompletionRequest {
        system: SYNONYM_INSTRUCTION.to_string(),
        user: format!("Input:\n{input}"),
        schema_name: "synonym".to_string(),
        schema: json!({
            "type": "object",
            "required": ["is_synonym", "rationale"],
            "properties": {
                "is_synonym": {"type": "boolean"},
                "rationale": {"type": "string"}
            }
        }),
        temperature: 0.0,
        structured: true,
    })
}

fn parse_verdict(text: &str) -> Result<LlmVerdict, String> {
    serde_json::from_str(text).map_err(|e| format!("invalid synonym verdict: {e}"))
}

/// Ask the model about one Pending pair and record the verdict.
///
/// On provider failure the candidate stays Pending.
pub fn verify_synonym_pair<P: LlmProvider + ?Sized>(
    kb: &mut KnowledgeBase,
    pair: PairKey,
    provider: &P,
    config: &ResolutionConfig,
    at: Timestamp,
) -> Result<CandidateState, ResolutionError> {
    let cand = kb
        .candidate(pair)
        .ok_or(ResolutionError::UnknownPair(pair))?
        .clone();
    if cand.state != CandidateState::Pending {
        return Err(ResolutionError::StaleState {
            pair,
            state: cand.state,
        });
    }
    let request = synonym_request(kb.graph(), pair, config.neighbor_context).ok_or(
        ResolutionError::StaleState {
            pair,
            state: cand.state,
        },
    )?;
    let verdict = call_structured(provider, &request, config.repair_retries, parse_verdict)?.value;

    let mut next = cand;
    next.llm_verdict = Some(verdict.clone());
    if !verdict.is_synonym {
        next.state = CandidateState::RejectedByLlm;
        kb.apply(Mutation::PutCandidate { candidate: next })?;
        kb.apply(Mutation::RecordDecision {
            decision: SynonymDecision {
                pair,
                decision: Decision::KeepSeparate,
                decided_by: DecidedBy::Llm,
                reviewer: None,
                survivor: None,
                decided_at: at,
            },
        })?;
        return Ok(CandidateState::RejectedByLlm);
    }
    if config.auto_approve {
        next.state = CandidateState::AutoVerified;
        kb.apply(Mutation::PutCandidate { candidate: next })?;
        execute_merge(kb, pair, DecidedBy::Llm, None, CandidateState::AutoVerified, at)?;
        return Ok(CandidateState::AutoVerified);
    }
    next.state = CandidateState::AwaitingReview;
    kb.apply(Mutation::PutCandidate { candidate: next })?;
    Ok(CandidateState::AwaitingReview)
}

/// The entity with more relations survives; ties go to the older, then the lower id.
pub fn choose_survivor(graph: &GraphStore, x: EntityId, y: EntityId) -> (EntityId, EntityId) {
    let score = |id: EntityId| {
        let e = graph.entity(id);
        (
            core::cmp::Reverse(graph.degree(id)),
            e.map(|e| e.created_at),
            id,
        )
    };
    if score(x) <= score(y) {
        (x, y)
    } else {
        (y, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReviewOutcome {
    Merged {
        survivor: EntityId,
        absorbed: EntityId,
    },
    KeptSeparate,
    /// The same decision was already in effect.
    Unchanged,
}

fn execute_merge(
    kb: &mut KnowledgeBase,
    pair: PairKey,
    by: DecidedBy,
    reviewer: Option<String>,
    state: CandidateState,
    at: Timestamp,
) -> Result<ReviewOutcome, ResolutionError> {
    let graph = kb.graph();
    let x = graph.resolve(pair.a()).ok_or(KbError::Graph(
        crate::graph::GraphError::UnknownEntity(pair.a()),
    ))?;
    let y = graph.resolve(pair.b()).ok_or(KbError::Graph(
        crate::graph::GraphError::UnknownEntity(pair.b()),
    ))?;
    let outcome = if x == y {
        ReviewOutcome::Unchanged
    } else {
        let (survivor, absorbed) = choose_survivor(graph, x, y);
        kb.apply(Mutation::MergeEntities { survivor, absorbed })?;
        ReviewOutcome::Merged { survivor, absorbed }
    };
    if let Some(mut cand) = kb.candidate(pair).cloned() {
        if cand.state != state {
            cand.state = state;
            kb.apply(Mutation::PutCandidate { candidate: cand })?;
        }
    }
    let (decision_pair, survivor) = match outcome {
        ReviewOutcome::Merged { survivor, absorbed } => {
            (PairKey::new(survivor, absorbed), Some(survivor))
        }
        _ => (pair, None),
    };
    kb.apply(Mutation::RecordDecision {
        decision: SynonymDecision {
            pair: decision_pair,
            decision: Decision::Merge,
            decided_by: by,
            reviewer,
            survivor,
            decided_at: at,
        },
    })?;
    Ok(outcome)
}

/// Apply a human decision to a candidate awaiting review.
pub fn apply_review_decision(
    kb: &mut KnowledgeBase,
    pair: PairKey,
    decision: Decision,
    reviewer: &str,
    at: Timestamp,
) -> Result<ReviewOutcome, ResolutionError> {
    let cand = kb
        .candidate(pair)
        .ok_or(ResolutionError::UnknownPair(pair))?
        .clone();
    use CandidateState as S;
    match (cand.state, decision) {
        (S::Approved | S::AutoVerified, Decision::Merge) => Ok(ReviewOutcome::Unchanged),
        (S::RejectedByHuman, Decision::KeepSeparate) => Ok(ReviewOutcome::Unchanged),
        (S::AwaitingReview | S::RejectedByLlm, Decision::Merge) => execute_merge(
            kb,
            pair,
            DecidedBy::Human,
            Some(reviewer.to_string()),
            S::Approved,
            at,
        ),
        (S::AwaitingReview | S::RejectedByLlm, Decision::KeepSeparate) => {
            let mut next = cand;
            next.state = S::RejectedByHuman;
            kb.apply(Mutation::PutCandidate { candidate: next })?;
            kb.apply(Mutation::RecordDecision {
                decision: SynonymDecision {
                    pair,
                    decision: Decision::KeepSeparate,
                    decided_by: DecidedBy::Human,
                    reviewer: Some(reviewer.to_string()),
                    survivor: None,
                    decided_at: at,
                },
            })?;
            Ok(ReviewOutcome::KeptSeparate)
        }
        (state, _) => Err(ResolutionError::StaleState { pair, state }),
    }
}

/// Resolve a surface form to its live entity, following merges.
pub fn lookup_synonym(kb: &KnowledgeBase, name: &str) -> Option<EntityId> {
    let g = kb.graph();
    g.lookup_any(name).and_then(|id| g.resolve(id))
}

/// Re-execute the merges of a decision log. Returns the number of merges applied.
pub fn replay_decisions(
    kb: &mut KnowledgeBase,
    decisions: &[SynonymDecision],
) -> Result<usize, KbError> {
    let mut merged = 0;
    for d in decisions {
        let Some(survivor) = d.survivor else { continue };
        let Some(absorbed) = d.pair.other(survivor) else {
            continue;
        };
        if let Applied::Merge(report) = kb.apply(Mutation::MergeEntities { survivor, absorbed })? {
            if !report.noop {
                merged += 1;
            }
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub proposed: usize,
    pub judged: usize,
    pub awaiting_review: usize,
    pub rejected_by_llm: usize,
    pub auto_merged: usize,
    pub errors: Vec<String>,
}

/// One resolution phase: generate, propose, then judge every Pending pair.
pub fn run_resolution<P, E>(
    kb: &mut KnowledgeBase,
    provider: &P,
    embedder: Option<&E>,
    normalizer: &NameNormalizer,
    config: &ResolutionConfig,
    at: Timestamp,
) -> Result<ResolutionReport, KbError>
where
    P: LlmProvider + ?Sized,
    E: Embedder + ?Sized,
{
    let mut report = ResolutionReport::default();
    let blocked = kb.blocked_pairs();
    let mut fresh = candidates_by_relation(kb.graph(), normalizer, &blocked, config);
    if let Some(embedder) = embedder {
        match candidates_by_embedding(kb.graph(), embedder, normalizer, &blocked, config) {
            Ok(c) => fresh.extend(c),
            Err(e) => report.errors.push(format!("embedding: {e}")),
        }
    }
    report.proposed = propose(kb, fresh)?;

    let pending: Vec<PairKey> = kb
        .candidates()
        .filter(|c| c.state == CandidateState::Pending)
        .map(|c| c.pair)
        .collect();
    for pair in pending {
        // an earlier auto-merge may have remapped or removed this pair
        if kb.candidate(pair).map(|c| c.state) != Some(CandidateState::Pending) {
            continue;
        }
        match verify_synonym_pair(kb, pair, provider, config, at) {
            Ok(state) => {
                report.judged += 1;
                match state {
                    CandidateState::AwaitingReview => report.awaiting_review += 1,
                    CandidateState::RejectedByLlm => report.rejected_by_llm += 1,
                    CandidateState::AutoVerified => report.auto_merged += 1,
                    _ => {}
                }
            }
            Err(ResolutionError::Kb(e)) => return Err(e),
            Err(e) => report.errors.push(format!("{pair}: {e}")),
        }
    }
    Ok(report)
}
