//! Command-line front end. `main` parses arguments and maps [`CliError`] to
//! exit code 1 with a one-line JSON error on stderr; clap usage errors exit 2.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sckg_core::analytics::{compare_datasets, evaluate_precision, EvalError, MatchPolicy, Scope};
use sckg_core::model::{RelationId, RelationStatus, Timestamp};
use sckg_core::normalize::NameNormalizer;
use sckg_core::provider::ProviderError;
use sckg_core::resolution::{run_resolution, Decision, PairKey, ResolutionError};
use sckg_core::similarity::TrigramEmbedder;
use sckg_core::snapshot::{GraphSnapshot, SnapshotError};
use sckg_core::verify::verify_batch;
use sckg_core::{KbError, Mutation};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::api::{self, AppState, Auth};
use crate::clock::{Clock, ClockKind};
use crate::config::{ConfigError, RunConfig};
use crate::db::{export_synonyms, import_synonyms, parse_synonyms, write_atomic, Database, DbError};
use crate::docstore::StorageError;
use crate::export::{export_graph, ExportError, ExportFormat};
use crate::labeling::{labeling_sheet, parse_labels, LabelError};
use crate::metrics::{default_scopes, metrics_report, parse_scope, DEFAULT_SEED};
use crate::orchestrator::{Checkpoint, CheckpointError, Miner, OrchestratorError, RunReport};
use crate::providers::{DataDir, ProviderSet};
use crate::queries;
use crate::seeds::{load_seeds, SeedFileError};

#[derive(Debug, Parser)]
#[command(name = "sckg", version, about = "Mine, curate and analyse a supply chain knowledge graph")]
pub struct Cli {
    /// Root of the store: db/, docs/, checkpoints/ and runs/ live below it.
    #[arg(long, global = true, env = "SCKG_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true, env = "SCKG_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load seed companies into the store.
    Seed {
        /// Seed file (.csv or .jsonl); defaults to the config's seeds_path.
        #[arg(long)]
        seeds: Option<PathBuf>,
    },
    /// Mine until fixpoint or a budget stops the run.
    Run {
        /// Continue from checkpoints/latest.json.
        #[arg(long)]
        resume: bool,
    },
    /// Propose and judge synonym candidates.
    Resolve,
    /// Judge every Extracted relation.
    Verify {
        /// Filled-in labeling sheet; enables before/after precision.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Work the synonym review queue.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Degree, density and modularity per scope.
    Metrics {
        /// `All` or a jurisdiction code; repeatable. Defaults to All plus every jurisdiction.
        #[arg(long)]
        scope: Vec<String>,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Precision audits.
    Eval {
        #[command(subcommand)]
        action: EvalAction,
    },
    /// Write the graph as gexf, graphml or json.
    Export {
        format: String,
        #[arg(long, default_value = "All")]
        scope: String,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long)]
        allow_empty: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Node and edge overlap with another snapshot.
    Compare {
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Aliases)]
        policy: PolicyArg,
    },
    /// Serve the HTTP API. Tokens come from API_TOKEN.
    Serve {
        #[arg(long, env = "BIND_ADDR", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Move the synonym decision table between stores.
    Synonyms {
        #[command(subcommand)]
        action: SynonymAction,
    },
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    /// Count Extracted relations as well as Verified ones.
    #[arg(long)]
    pub include_unverified: bool,
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    List {
        #[arg(long)]
        limit: Option<usize>,
    },
    Approve {
        #[arg(value_parser = parse_pair)]
        pair: PairKey,
        #[arg(long, default_value = "cli")]
        reviewer: String,
    },
    Reject {
        #[arg(value_parser = parse_pair)]
        pair: PairKey,
        #[arg(long, default_value = "cli")]
        reviewer: String,
    },
}

fn parse_pair(s: &str) -> Result<PairKey, String> {
    s.parse().map_err(|_| format!("expected a pair like E1-E2, got {s:?}"))
}

#[derive(Debug, Subcommand)]
pub enum EvalAction {
    /// Write a labeling sheet for a seeded sample of relations.
    Sample {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision of a labeled sheet.
    Score { labels: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum SynonymAction {
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Import { file: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Exact,
    Aliases,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Seeds(#[from] SeedFileError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Run(#[from] OrchestratorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Review(#[from] ResolutionError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Db(_) | CliError::Storage(_) | CliError::Kb(_) => "storage",
            CliError::Seeds(_) => "seeds",
            CliError::Provider(_) => "provider",
            CliError::Run(_) => "run",
            CliError::Checkpoint(CheckpointError::ConfigHashMismatch { .. }) => "config_hash_mismatch",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Review(ResolutionError::UnknownPair(_)) => "unknown_pair",
            CliError::Review(ResolutionError::StaleState { .. }) => "stale_state",
            CliError::Review(_) => "review",
            CliError::Labels(_) | CliError::Eval(_) => "eval",
            CliError::Export(ExportError::EmptyView) => "empty_view",
            CliError::Export(_) => "export",
            CliError::Snapshot(_) => "snapshot",
            CliError::Io { .. } => "io",
            CliError::Invalid(_) => "invalid",
        }
    }

    /// The single-line JSON printed on stderr.
    pub fn to_json(&self) -> String {
        json!({"error": self.code(), "message": self.to_string()}).to_string()
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    Ok(match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: RunConfig,
    dirs: DataDir,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn open_db(&self) -> Result<Database, CliError> {
        Ok(self.dirs.open_db(self.config.alias_policy)?.0)
    }

    fn now(&self, db: &Database) -> Timestamp {
        match self.config.clock {
            ClockKind::Logical => queries::next_logical_time(db.kb()),
            ClockKind::System => Clock::new(ClockKind::System, 0).now(),
        }
    }

    /// JSON when `--json`, otherwise the text rendering.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce(&T) -> String) -> Result<(), CliError> {
        let s = if self.cli.json {
            serde_json::to_string(value).expect("output serializes")
        } else {
            text(value)
        };
        self.write(&s)
    }

    fn write(&mut self, s: &str) -> Result<(), CliError> {
        let io = |source| CliError::Io { path: "<stdout>".into(), source };
        self.out.write_all(s.as_bytes()).map_err(io)?;
        if !s.ends_with('\n') {
            self.out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    /// File output reports the path; stdout output is the document itself.
    fn deliver(&mut self, out: Option<&Path>, body: &str) -> Result<(), CliError> {
        match out {
            Some(p) => {
                write_atomic(p, body.as_bytes())?;
                let p = p.display().to_string();
                self.emit(&json!({"written": p, "bytes": body.len()}), |_| format!("wrote {p}"))
            }
            None => {
                let io = |source| CliError::Io { path: "<stdout>".into(), source };
                self.out.write_all(body.as_bytes()).map_err(io)
            }
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

/// Execute a parsed command, writing its output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let mut ctx = Ctx {
        cli,
        config,
        dirs: DataDir::new(&cli.data_dir),
        out,
    };
    match &cli.command {
        Command::Seed { seeds } => seed(&mut ctx, seeds.as_deref()),
        Command::Run { resume } => mine(&mut ctx, *resume),
        Command::Resolve => resolve(&mut ctx),
        Command::Verify { labels } => verify(&mut ctx, labels.as_deref()),
        Command::Review { action } => review(&mut ctx, action),
        Command::Metrics { scope, view, seed } => metrics(&mut ctx, scope, view.include_unverified, *seed),
        Command::Eval { action } => eval(&mut ctx, action),
        Command::Export {
            format,
            scope,
            view,
            allow_empty,
            out,
        } => export(&mut ctx, format, scope, view.include_unverified, *allow_empty, out.as_deref()),
        Command::Compare { snapshot, policy } => compare(&mut ctx, snapshot, *policy),
        Command::Serve { bind } => serve(&ctx, *bind),
        Command::Synonyms { action } => synonyms(&mut ctx, action),
    }
}

fn seed(ctx: &mut Ctx<'_>, path: Option<&Path>) -> Result<(), CliError> {
    let path = path
        .or(ctx.config.seeds_path.as_deref())
        .ok_or_else(|| CliError::Invalid("no seed file: pass --seeds or set seeds_path".into()))?;
    let seeds = load_seeds(path)?;
    let mut db = ctx.open_db()?;
    let at = ctx.now(&db);
    let mut created = 0;
    for s in &seeds {
        let applied = db.kb_mut().apply(Mutation::UpsertEntity {
            kind: sckg_core::model::EntityKind::Company,
            name: s.company_name.clone(),
            aliases: s.aliases.clone(),
            jurisdiction: s.jurisdiction.clone(),
            at,
        })?;
        if let sckg_core::Applied::Entity(u) = applied {
            created += usize::from(u.created);
        }
    }
    db.commit()?;
    let report = json!({"seeds": seeds.len(), "created": created});
    ctx.emit(&report, |_| format!("{} seeds, {created} new entities", seeds.len()))
}

fn mine(ctx: &mut Ctx<'_>, resume: bool) -> Result<(), CliError> {
    let providers = ProviderSet::from_config(&ctx.config)?;
    let db = ctx.open_db()?;
    let docs = ctx.dirs.open_docs()?;
    let few_shot = ctx.config.few_shot()?;
    let config = ctx.config.clone();
    let mut miner = if resume {
        let cp = Checkpoint::read(&ctx.dirs.checkpoints().join("latest.json"))?;
        Miner::resume(cp, config, few_shot, db, docs, providers.services())?
    } else {
        let path = config
            .seeds_path
            .clone()
            .ok_or_else(|| CliError::Invalid("config has no seeds_path".into()))?;
        let seeds = load_seeds(&path)?;
        let mut m = Miner::new(config, few_shot, db, docs, providers.services());
        m.init_from_seeds(&seeds)?;
        m
    };
    miner = miner.checkpoint_into(ctx.dirs.checkpoints());
    let report = miner.run_until_fixpoint()?;
    let at = miner.clock().peek();
    let mut db = miner.into_db();
    db.compact(at)?;
    let path = ctx.dirs.run_report();
    std::fs::create_dir_all(path.parent().expect("runs dir")).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    write_atomic(&path, serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
    ctx.emit(&report, run_text)
}

fn run_text(r: &RunReport) -> String {
    format!(
        "stopped: {}\niterations: {}\nentities: {}\nrelations: {}\npending review: {}\nawaiting verification: {}\ndocuments stored: {}\nerrors: {}",
        serde_json::to_string(&r.stop_reason).expect("stop reason serializes"),
        r.iterations,
        r.live_entities,
        r.relations,
        r.pending_review,
        r.awaiting_verification,
        r.counters.docs_stored,
        r.counters.errors,
    )
}

fn resolve(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let providers = ProviderSet::from_config(&ctx.config)?;
    let mut db = ctx.open_db()?;
    let at = ctx.now(&db);
    let embedder = TrigramEmbedder::default();
    let report = run_resolution(
        db.kb_mut(),
        providers.llm.as_ref(),
        ctx.config.embedding_candidates.then_some(&embedder),
        &NameNormalizer::default(),
        &ctx.config.resolution,
        at,
    )?;
    db.commit()?;
    ctx.emit(&report, pretty)
}

fn verify(ctx: &mut Ctx<'_>, labels: Option<&Path>) -> Result<(), CliError> {
    let labels = labels.map(|p| read(p).and_then(|t| Ok(parse_labels(&t)?))).transpose()?;
    let providers = ProviderSet::from_config(&ctx.config)?;
    let mut db = ctx.open_db()?;
    let at = ctx.now(&db);
    let report = verify_batch(db.kb_mut(), providers.llm.as_ref(), labels.as_ref(), &ctx.config.verify, at)?;
    db.commit()?;
    ctx.emit(&report, pretty)
}

fn review(ctx: &mut Ctx<'_>, action: &ReviewAction) -> Result<(), CliError> {
    let mut db = ctx.open_db()?;
    let (pair, decision, reviewer) = match action {
        ReviewAction::List { limit } => {
            let page = queries::review_queue(db.kb(), None, *limit);
            return ctx.emit(&page, |p| {
                let mut s = String::new();
                for c in &p.items {
                    let name = |side: &Option<queries::ReviewSide>| side.as_ref().map_or("?", |x| x.name.as_str()).to_string();
                    s.push_str(&format!(
                        "{}\t{}\t{}\tname {:.2}\n",
                        c.pair,
                        name(&c.entity_a),
                        name(&c.entity_b),
                        c.candidate.name_similarity
                    ));
                }
                if s.is_empty() {
                    s.push_str("review queue is empty");
                }
                s
            });
        }
        ReviewAction::Approve { pair, reviewer } => (*pair, Decision::Merge, reviewer),
        ReviewAction::Reject { pair, reviewer } => (*pair, Decision::KeepSeparate, reviewer),
    };
    let at = ctx.now(&db);
    let res = queries::decide(db.kb_mut(), pair, decision, reviewer, at);
    db.commit()?;
    ctx.emit(&res?, |r| {
        if r.noop {
            format!("{}: already {}", r.pair, r.state.as_str())
        } else {
            format!("{}: {}", r.pair, r.state.as_str())
        }
    })
}

fn metrics(ctx: &mut Ctx<'_>, scopes: &[String], include_unverified: bool, seed: u64) -> Result<(), CliError> {
    let db = ctx.open_db()?;
    let g = db.kb().graph();
    let scopes: Vec<Scope> = if scopes.is_empty() {
        default_scopes(g)
    } else {
        scopes.iter().map(|s| parse_scope(s)).collect()
    };
    let report = metrics_report(g, &scopes, include_unverified, seed);
    ctx.emit(&report, |r| {
        let mut s = format!(
            "{:<8} {:>6} {:>6} {:>9} {:>10} {:>10} {:>10} {:>6}\n",
            "scope", "nodes", "edges", "avg_deg", "density_d", "density_u", "modularity", "comms"
        );
        for row in &r.rows {
            let st = &row.stats;
            let (q, c) = row
                .modularity
                .as_ref()
                .map_or(("-".to_string(), "-".to_string()), |m| (format!("{:.4}", m.q), m.partition.community_count.to_string()));
            s.push_str(&format!(
                "{:<8} {:>6} {:>6} {:>9.3} {:>10.4} {:>10.4} {:>10} {:>6}\n",
                row.scope, st.nodes, st.edges, st.average_degree, st.directed_density, st.density, q, c
            ));
        }
        s
    })
}

/// Relations a precision audit draws from: Verified, plus Extracted when asked.
fn audit_population(db: &Database, include_unverified: bool) -> Vec<RelationId> {
    db.kb()
        .graph()
        .relations()
        .filter(|r| match r.status {
            RelationStatus::Verified => true,
            RelationStatus::Extracted => include_unverified,
            _ => false,
        })
        .map(|r| r.id)
        .collect()
}

fn eval(ctx: &mut Ctx<'_>, action: &EvalAction) -> Result<(), CliError> {
    match action {
        EvalAction::Sample { size, seed, view, out } => {
            let db = ctx.open_db()?;
            let population = audit_population(&db, view.include_unverified);
            let sheet = labeling_sheet(db.kb().graph(), &population, *size, *seed)?;
            ctx.deliver(out.as_deref(), &sheet)
        }
        EvalAction::Score { labels } => {
            let labels: BTreeMap<RelationId, bool> = parse_labels(&read(labels)?)?;
            let ids: Vec<RelationId> = labels.keys().copied().collect();
            let report = evaluate_precision(&ids, &labels, ids.len(), DEFAULT_SEED)?;
            ctx.emit(&report, |r| {
                format!(
                    "precision {:.4} ({} true, {} false)",
                    r.precision, r.true_positives, r.false_positives
                )
            })
        }
    }
}

fn export(
    ctx: &mut Ctx<'_>,
    format: &str,
    scope: &str,
    include_unverified: bool,
    allow_empty: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let format: ExportFormat = format.parse()?;
    let db = ctx.open_db()?;
    let filter = sckg_core::analytics::metrics_scope(&parse_scope(scope), include_unverified);
    let view = db.kb().graph().subgraph(&filter);
    let body = export_graph(&view, format, allow_empty)?;
    ctx.deliver(out, &body)
}

fn compare(ctx: &mut Ctx<'_>, snapshot: &Path, policy: PolicyArg) -> Result<(), CliError> {
    let other = GraphSnapshot::from_json(&read(snapshot)?)?.restore()?;
    let db = ctx.open_db()?;
    let policy = match policy {
        PolicyArg::Exact => MatchPolicy::ExactNormalizedName,
        PolicyArg::Aliases => MatchPolicy::AliasAware,
    };
    let report = compare_datasets(db.kb().graph(), other.graph(), policy, &NameNormalizer::default());
    ctx.emit(&report, |r| {
        format!(
            "nodes: {} here, {} there, {} shared\nsupply edges: {} here, {} there, {} shared",
            r.nodes_a, r.nodes_b, r.node_overlap, r.edges_a, r.edges_b, r.edge_overlap
        )
    })
}

fn serve(ctx: &Ctx<'_>, bind: SocketAddr) -> Result<(), CliError> {
    let auth = Auth::parse(&std::env::var("API_TOKEN").unwrap_or_default()).map_err(CliError::Invalid)?;
    if auth.is_open() {
        tracing::warn!("API_TOKEN is not set; every request is treated as a reviewer");
    }
    let db = ctx.open_db()?;
    let state = Arc::new(AppState::new(db, ctx.dirs.clone(), auth, ctx.config.clock));
    let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: "<runtime>".into(),
        source,
    })?;
    rt.block_on(api::serve(state, bind)).map_err(|source| CliError::Io {
        path: bind.to_string().into(),
        source,
    })
}

fn synonyms(ctx: &mut Ctx<'_>, action: &SynonymAction) -> Result<(), CliError> {
    let mut db = ctx.open_db()?;
    match action {
        SynonymAction::Export { out } => {
            let body = export_synonyms(db.kb());
            ctx.deliver(out.as_deref(), &body)
        }
        SynonymAction::Import { file } => {
            let decisions = parse_synonyms(&read(file)?)?;
            let report = import_synonyms(db.kb_mut(), &decisions)?;
            db.commit()?;
            ctx.emit(&report, |r| format!("merged {}, blocked {}, skipped {}", r.merged, r.blocked, r.skipped))
        }
    }
}
