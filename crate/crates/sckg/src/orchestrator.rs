//! The mining loop: seed, search, fetch, extract, store, grow the frontier,
//! and repeat until no new companies turn up or a budget runs out.
//!
//! Companies are processed breadth-first, one frontier layer per iteration.
//! Budgets are checked before every URL, so a run always stops between
//! documents. Resolution and verification run as phases after iterations
//! at the configured cadence. Per-item failures are logged and counted,
//! never fatal.

use std::cell::Cell;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sckg_core::extraction::{
    build_prompt, chunk_document, extract_triplets, validate_evidence, FewShotSet, PayloadEntity,
    SourceDocument, ValidatedTriplet,
};
use sckg_core::harvest::{generate_keywords, KeywordQuery, SeedRecord};
use sckg_core::mining::{BudgetKind, FrontierEntry, MiningState, StopReason};
use sckg_core::model::{attributes_from_json, DocumentId, EntityId, EntityKind, RelationStatus};
use sckg_core::normalize::NameNormalizer;
use sckg_core::provider::{CompletionRequest, LlmProvider, ProviderError};
use sckg_core::resolution::{lookup_synonym, run_resolution, CandidateState, ResolutionReport};
use sckg_core::similarity::TrigramEmbedder;
use sckg_core::snapshot::GraphSnapshot;
use sckg_core::verify::{verify_batch, VerificationReport};
use sckg_core::{Applied, KbError, Mutation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::config::RunConfig;
use crate::db::{write_atomic, Database, DbError};
use crate::docstore::{DocumentStore, NewDocument, Provenance, StorageError};
use crate::fetch::Fetcher;
use crate::search::SearchProvider;
use crate::text::extract_text;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint was written with config {found}, current config is {expected}")]
    ConfigHashMismatch { expected: String, found: String },
}

pub const CHECKPOINT_FORMAT: &str = "sckg-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    /// Logical clock value to continue from.
    pub clock: Option<i64>,
    pub state: MiningState,
    pub graph: GraphSnapshot,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.into(),
            source,
        })?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CheckpointError::CorruptCheckpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::CorruptCheckpoint(format!(
                "unknown format {:?}",
                cp.format
            )));
        }
        if !cp.state.is_consistent() {
            return Err(CheckpointError::CorruptCheckpoint(
                "frontier overlaps visited set".into(),
            ));
        }
        Ok(cp)
    }
}

/// External services the loop talks to.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub search: &'a dyn SearchProvider,
    pub fetcher: &'a dyn Fetcher,
    pub llm: &'a dyn LlmProvider,
}

/// Counts provider calls for the budget.
struct Counting<'a> {
    inner: &'a dyn LlmProvider,
    calls: Cell<u64>,
}

impl LlmProvider for Counting<'_> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.set(self.calls.get() + 1);
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub iteration: u32,
    pub resolution: Option<ResolutionReport>,
    pub verification: Option<VerificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stop_reason: StopReason,
    pub iterations: u32,
    pub counters: sckg_core::mining::Counters,
    pub frontier: usize,
    pub visited: usize,
    pub live_entities: usize,
    pub relations: usize,
    /// Synonym pairs waiting for a human.
    pub pending_review: usize,
    /// Relations still Extracted.
    pub awaiting_verification: usize,
    pub phases: Vec<PhaseLog>,
    pub config_hash: String,
    pub elapsed_ms: u64,
}

pub struct Miner<'a> {
    config: RunConfig,
    few_shot: FewShotSet,
    config_hash: String,
    db: Database,
    docs: DocumentStore,
    state: MiningState,
    services: Services<'a>,
    clock: Clock,
    normalizer: NameNormalizer,
    embedder: TrigramEmbedder,
    checkpoint_dir: Option<PathBuf>,
    phases: Vec<PhaseLog>,
    started: Instant,
}

impl<'a> Miner<'a> {
    pub fn new(
        config: RunConfig,
        few_shot: FewShotSet,
        db: Database,
        docs: DocumentStore,
        services: Services<'a>,
    ) -> Self {
        let config_hash = config.hash(&few_shot);
        Miner {
            state: MiningState::new(config.budgets.clone()),
            clock: Clock::new(config.clock, config.clock_start),
            config_hash,
            few_shot,
            db,
            docs,
            services,
            normalizer: NameNormalizer::default(),
            embedder: TrigramEmbedder::default(),
            checkpoint_dir: None,
            phases: Vec::new(),
            started: Instant::now(),
            config,
        }
    }

    /// Continue from a checkpoint. Budgets come from the current config.
    pub fn resume(
        checkpoint: Checkpoint,
        config: RunConfig,
        few_shot: FewShotSet,
        mut db: Database,
        docs: DocumentStore,
        services: Services<'a>,
    ) -> Result<Self, CheckpointError> {
        let expected = config.hash(&few_shot);
        if checkpoint.config_hash != expected {
            return Err(CheckpointError::ConfigHashMismatch {
                expected,
                found: checkpoint.config_hash,
            });
        }
        let kb = checkpoint
            .graph
            .restore()
            .map_err(|e| CheckpointError::CorruptCheckpoint(e.to_string()))?;
        db.replace(kb);
        let mut miner = Miner::new(config, few_shot, db, docs, services);
        miner.state = checkpoint.state;
        miner.state.budgets = miner.config.budgets.clone();
        if let Some(c) = checkpoint.clock {
            miner.clock = Clock::new(crate::clock::ClockKind::Logical, c);
        }
        Ok(miner)
    }

    /// Write `iter-<n>.json` and `latest.json` into `dir` after every iteration.
    pub fn checkpoint_into(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn state(&self) -> &MiningState {
        &self.state
    }

    pub fn db(&self) -> &Database {
        &self.db
    }

    pub fn docs(&self) -> &DocumentStore {
        &self.docs
    }

    pub fn into_db(self) -> Database {
        self.db
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    /// Snapshot JSON stamped with the current logical time.
    pub fn snapshot_json(&self) -> String {
        self.db.kb().snapshot(self.clock.peek()).to_json()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config_hash: self.config_hash.clone(),
            clock: self.clock.logical_state(),
            state: self.state.clone(),
            graph: self.db.kb().snapshot(self.clock.peek()),
        }
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<(), OrchestratorError> {
        write_atomic(path, self.checkpoint().to_json().as_bytes())?;
        Ok(())
    }

    /// Upsert seeds as companies and queue them in file order.
    pub fn init_from_seeds(&mut self, seeds: &[SeedRecord]) -> Result<usize, OrchestratorError> {
        let mut queued = 0;
        for s in seeds {
            let at = self.clock.now();
            let res = self.db.kb_mut().apply(Mutation::UpsertEntity {
                kind: EntityKind::Company,
                name: s.company_name.clone(),
                aliases: s.aliases.clone(),
                jurisdiction: s.jurisdiction.clone(),
                at,
            });
            match res {
                Ok(Applied::Entity(u)) => {
                    if self.state.enqueue(u.id, 0) {
                        queued += 1;
                    }
                }
                Ok(_) => unreachable!("upsert returns an entity"),
                Err(e) => {
                    tracing::warn!(seed = %s.company_name, error = %e, "seed skipped");
                    self.state.counters.errors += 1;
                }
            }
        }
        self.db.commit()?;
        Ok(queued)
    }

    fn budget_hit(&self) -> Option<BudgetKind> {
        self.state
            .exhausted(self.started.elapsed().as_millis() as u64)
    }

    /// Process the current frontier layer. Returns a stop reason if a budget
    /// ran out part way.
    pub fn run_iteration(&mut self) -> Result<Option<StopReason>, OrchestratorError> {
        let batch = self.state.next_batch(None);
        for entry in batch {
            if let Some(b) = self.process_company(entry)? {
                return Ok(Some(StopReason::Budget(b)));
            }
            self.state.complete(entry.company);
        }
        self.state.iteration += 1;
        self.run_phases()?;
        if let Some(dir) = &self.checkpoint_dir {
            let n = self.state.iteration;
            self.write_checkpoint(&dir.join(format!("iter-{n}.json")))?;
            self.write_checkpoint(&dir.join("latest.json"))?;
        }
        Ok(None)
    }

    pub fn run_until_fixpoint(&mut self) -> Result<RunReport, OrchestratorError> {
        let stop = loop {
            if self.state.frontier.is_empty() {
                break StopReason::Fixpoint;
            }
            if let Some(b) = self.budget_hit() {
                break StopReason::Budget(b);
            }
            if let Some(stop) = self.run_iteration()? {
                break stop;
            }
        };
        if let (StopReason::Budget(_), Some(dir)) = (stop, &self.checkpoint_dir) {
            self.write_checkpoint(&dir.join("latest.json"))?;
        }
        Ok(self.report(stop))
    }

    pub fn report(&self, stop_reason: StopReason) -> RunReport {
        let kb = self.db.kb();
        RunReport {
            stop_reason,
            iterations: self.state.iteration,
            counters: self.state.counters.clone(),
            frontier: self.state.frontier.len(),
            visited: self.state.visited.len(),
            live_entities: kb.graph().live_entities().count(),
            relations: kb.graph().relations().count(),
            pending_review: kb
                .candidates()
                .filter(|c| c.state == CandidateState::AwaitingReview)
                .count(),
            awaiting_verification: kb
                .graph()
                .relations()
                .filter(|r| r.status == RelationStatus::Extracted)
                .count(),
            phases: self.phases.clone(),
            config_hash: self.config_hash.clone(),
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        }
    }

    fn run_phases(&mut self) -> Result<(), OrchestratorError> {
        let n = self.state.iteration;
        let due = |every: u32| every > 0 && n.is_multiple_of(every);
        let mut log = PhaseLog {
            iteration: n,
            resolution: None,
            verification: None,
        };
        let llm = Counting {
            inner: self.services.llm,
            calls: Cell::new(0),
        };
        if due(self.config.cadence.resolve_every) {
            let at = self.clock.now();
            let embedder = self.config.embedding_candidates.then_some(&self.embedder);
            let rep = run_resolution(
                self.db.kb_mut(),
                &llm,
                embedder,
                &self.normalizer,
                &self.config.resolution,
                at,
            )?;
            self.forward_merged();
            log.resolution = Some(rep);
        }
        if due(self.config.cadence.verify_every) {
            let at = self.clock.now();
            log.verification = Some(verify_batch(
                self.db.kb_mut(),
                &llm,
                None,
                &self.config.verify,
                at,
            )?);
        }
        self.state.counters.provider_calls += llm.calls.get();
        self.db.commit()?;
        if log.resolution.is_some() || log.verification.is_some() {
            self.phases.push(log);
        }
        Ok(())
    }

    /// Point frontier and visited entries at merge survivors.
    fn forward_merged(&mut self) {
        let g = self.db.kb().graph();
        let moved: Vec<(EntityId, EntityId)> = self
            .state
            .frontier
            .iter()
            .map(|e| e.company)
            .chain(self.state.visited.iter().copied())
            .filter_map(|id| g.resolve(id).filter(|s| *s != id).map(|s| (id, s)))
            .collect();
        for (absorbed, survivor) in moved {
            self.state.forward(absorbed, survivor);
        }
    }

    fn process_company(&mut self, entry: FrontierEntry) -> Result<Option<BudgetKind>, OrchestratorError> {
        let g = self.db.kb().graph();
        let Some(entity) = g
            .resolve(entry.company)
            .and_then(|id| g.entity(id))
            .cloned()
        else {
            return Ok(None);
        };
        let queries = match generate_keywords(&entity, &self.config.templates, self.config.max_aliases) {
            Ok(q) => q,
            Err(e) => {
                tracing::warn!(company = %entity.id, error = %e, "no keywords");
                self.state.counters.errors += 1;
                return Ok(None);
            }
        };
        for q in queries {
            if let Some(b) = self.budget_hit() {
                return Ok(Some(b));
            }
            self.state.counters.queries_issued += 1;
            let results = match self.services.search.search(&q.query_text, self.config.search_limit) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(query = %q.query_text, error = %e, "search failed");
                    self.state.counters.errors += 1;
                    continue;
                }
            };
            self.state.counters.search_results += results.len() as u64;
            for r in results {
                if let Some(b) = self.budget_hit() {
                    return Ok(Some(b));
                }
                self.process_url(&r.url, &q, entry)?;
            }
        }
        Ok(None)
    }

    fn process_url(&mut self, url: &str, query: &KeywordQuery, entry: FrontierEntry) -> Result<(), OrchestratorError> {
        if let Some(known) = self.state.fetched_urls.get(url).cloned() {
            if let Some(id) = known {
                self.docs.append_provenance(&Provenance {
                    document_id: id.clone(),
                    url: Some(url.to_string()),
                    fetched_at: self.clock.now(),
                    origin_query: Some(query.clone()),
                })?;
                if !self.state.processed_documents.contains(&id) {
                    if let Some(doc) = self.docs.get(&id)? {
                        self.process_document(&id, &doc.cleaned_text, Some(url), entry)?;
                    }
                }
            }
            return Ok(());
        }
        let raw = match self.services.fetcher.fetch(url) {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(%url, error = %e, "fetch failed");
                self.state.counters.errors += 1;
                self.state.fetched_urls.insert(url.to_string(), None);
                return Ok(());
            }
        };
        self.state.counters.docs_fetched += 1;
        let text = match extract_text(raw.content_type.as_deref(), &raw.body, self.config.fetch.max_text_chars) {
            Ok(t) => t,
            Err(e) => {
                tracing::warn!(%url, error = %e, "no usable text");
                self.state.counters.errors += 1;
                self.state.fetched_urls.insert(url.to_string(), None);
                return Ok(());
            }
        };
        let outcome = self.docs.store(NewDocument {
            cleaned_text: &text,
            url: Some(url),
            raw: Some(&raw.body),
            language: Some(&query.language),
            fetched_at: self.clock.now(),
            origin_query: Some(query),
        })?;
        if outcome.is_new {
            self.state.counters.docs_stored += 1;
        } else {
            self.state.counters.docs_duplicate += 1;
        }
        self.state
            .fetched_urls
            .insert(url.to_string(), Some(outcome.document_id.clone()));
        if !self.state.processed_documents.contains(&outcome.document_id) {
            self.process_document(&outcome.document_id, &text, Some(url), entry)?;
        }
        Ok(())
    }

    fn process_document(
        &mut self,
        id: &DocumentId,
        text: &str,
        url: Option<&str>,
        entry: FrontierEntry,
    ) -> Result<(), OrchestratorError> {
        let chunks = match chunk_document(text, &self.config.chunk) {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!(doc = %id, error = %e, "chunking failed");
                self.state.counters.errors += 1;
                return Ok(());
            }
        };
        let llm = Counting {
            inner: self.services.llm,
            calls: Cell::new(0),
        };
        for chunk in &chunks {
            self.state.counters.chunks += 1;
            let bundle = match build_prompt(chunk, &self.few_shot, &self.config.prompt) {
                Ok(b) => b,
                Err(e) => {
                    tracing::warn!(doc = %id, chunk = chunk.index, error = %e, "prompt too large");
                    self.state.counters.errors += 1;
                    continue;
                }
            };
            let extraction = match extract_triplets(&bundle, &llm, self.config.extraction_retries) {
                Ok(x) => x,
                Err(e) => {
                    tracing::warn!(doc = %id, chunk = chunk.index, error = %e, "extraction failed");
                    self.state.counters.errors += 1;
                    continue;
                }
            };
            let at = self.clock.now();
            let report = validate_evidence(
                &extraction.payload,
                SourceDocument {
                    id,
                    cleaned_text: text,
                    url,
                },
                at,
            );
            self.state.counters.triplets_extracted += extraction.payload.relations.len() as u64;
            self.state.counters.triplets_rejected += report.rejected.len() as u64;
            for t in report.accepted {
                if self.store_triplet(t, entry, at) {
                    self.state.counters.triplets_accepted += 1;
                } else {
                    self.state.counters.triplets_rejected += 1;
                }
            }
        }
        self.state.counters.provider_calls += llm.calls.get();
        self.state.processed_documents.insert(id.clone());
        self.db.commit()?;
        Ok(())
    }

    fn store_triplet(&mut self, t: ValidatedTriplet, entry: FrontierEntry, at: sckg_core::model::Timestamp) -> bool {
        let (Some(source), Some(target)) = (
            self.resolve_mention(&t.source, entry, at),
            self.resolve_mention(&t.target, entry, at),
        ) else {
            return false;
        };
        let res = self.db.kb_mut().apply(Mutation::UpsertRelation {
            kind: t.relation.kind,
            source,
            target,
            evidence: vec![t.evidence],
            attributes: attributes_from_json(&t.relation.attributes),
            at,
        });
        match res {
            Ok(_) => true,
            Err(e) => {
                tracing::warn!(error = %e, "relation rejected by the store");
                self.state.counters.errors += 1;
                false
            }
        }
    }

    /// Route a mention to its canonical entity, creating it if unseen.
    /// New companies join the frontier one hop deeper.
    fn resolve_mention(
        &mut self,
        mention: &PayloadEntity,
        entry: FrontierEntry,
        at: sckg_core::model::Timestamp,
    ) -> Option<EntityId> {
        let kb = self.db.kb();
        if let Some(id) = lookup_synonym(kb, &mention.name) {
            if kb.graph().entity(id).map(|e| e.kind) == Some(mention.kind) {
                return Some(id);
            }
        }
        let jurisdiction = mention
            .attributes
            .get("jurisdiction")
            .and_then(|v| v.as_str())
            .map(str::to_string);
        match self.db.kb_mut().apply(Mutation::UpsertEntity {
            kind: mention.kind,
            name: mention.name.clone(),
            aliases: Vec::new(),
            jurisdiction,
            at,
        }) {
            Ok(Applied::Entity(u)) => {
                if u.created && mention.kind == EntityKind::Company {
                    self.state.counters.companies_discovered += 1;
                    self.state.enqueue(u.id, entry.depth + 1);
                }
                Some(u.id)
            }
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(name = %mention.name, error = %e, "entity rejected by the store");
                self.state.counters.errors += 1;
                None
            }
        }
    }
}
