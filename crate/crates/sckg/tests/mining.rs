mod common;

use std::fs;

use sckg::orchestrator::{Checkpoint, CheckpointError, Miner, Services};
use sckg::providers::DataDir;
use sckg::seeds::load_seeds;
use sckg_core::mining::{BudgetKind, StopReason};
use sckg_core::snapshot::GraphSnapshot;

#[test]
fn replay_run_reaches_fixpoint_in_two_iterations() {
    let config = common::mining_config();
    let p = common::replay(&config);
    let dir = tempfile::tempdir().unwrap();
    let (report, snap) = common::mine(dir.path(), &config, p.services(), false);
    assert_eq!(report.stop_reason, StopReason::Fixpoint);
    assert_eq!(report.iterations, 2);
    let c = &report.counters;
    // mirror page stored once, denylisted and PDF urls fail softly
    assert_eq!(c.docs_duplicate, 1);
    assert_eq!(c.errors, 2);
    assert_eq!(c.triplets_rejected, 1);
    assert_eq!(c.companies_discovered, 7);
    assert_eq!(report.pending_review, 1);
    assert_eq!(report.awaiting_verification, 0);
    let docs = DataDir::new(dir.path()).open_docs().unwrap();
    assert_eq!(docs.ids().unwrap().len(), 5);
    assert!(common::unsound_evidence(&snap, &docs).is_empty());
    let g = GraphSnapshot::from_json(&snap).unwrap();
    assert!(!g.entities.iter().any(|e| e.canonical_name == "Nvidia"));
}

#[test]
fn cassettes_match_the_scripted_world() {
    let config = common::mining_config();
    let (llm, web) = common::scripted(&config);
    let live = Services {
        search: &web,
        fetcher: &web,
        llm: &llm,
    };
    let a = tempfile::tempdir().unwrap();
    let (_, scripted) = common::mine(a.path(), &config, live, false);
    let p = common::replay(&config);
    let b = tempfile::tempdir().unwrap();
    let (_, replayed) = common::mine(b.path(), &config, p.services(), false);
    assert_eq!(scripted, replayed);
}

#[test]
fn replay_is_byte_identical_across_runs() {
    let config = common::mining_config();
    let p = common::replay(&config);
    let runs: Vec<String> = (0..2)
        .map(|_| {
            let d = tempfile::tempdir().unwrap();
            common::mine(d.path(), &config, p.services(), false).1
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

fn resume_from(cp: Checkpoint, config: &sckg::config::RunConfig, data: &std::path::Path, p: &sckg::providers::ProviderSet) -> Result<(sckg::orchestrator::RunReport, String), CheckpointError> {
    let dirs = DataDir::new(data);
    let (db, _) = dirs.open_db(config.alias_policy).unwrap();
    let docs = dirs.open_docs().unwrap();
    let mut m = Miner::resume(cp, config.clone(), config.few_shot().unwrap(), db, docs, p.services())?;
    let r = m.run_until_fixpoint().unwrap();
    Ok((r, m.snapshot_json()))
}

#[test]
fn resume_after_first_iteration_matches_uninterrupted_run() {
    let config = common::mining_config();
    let p = common::replay(&config);
    let full = tempfile::tempdir().unwrap();
    let (_, expected) = common::mine(full.path(), &config, p.services(), true);
    let cp_path = DataDir::new(full.path()).checkpoints().join("iter-1.json");
    let cp = Checkpoint::read(&cp_path).unwrap();
    assert_eq!(cp.state.iteration, 1);

    let fresh = tempfile::tempdir().unwrap();
    let (report, resumed) = resume_from(cp, &config, fresh.path(), &p).unwrap();
    assert_eq!(report.stop_reason, StopReason::Fixpoint);
    assert_eq!(report.iterations, 2);
    assert_eq!(resumed, expected);
}

#[test]
fn resume_rejects_changed_config_and_corrupt_files() {
    let config = common::mining_config();
    let p = common::replay(&config);
    let full = tempfile::tempdir().unwrap();
    common::mine(full.path(), &config, p.services(), true);
    let cp_path = DataDir::new(full.path()).checkpoints().join("iter-1.json");

    let mut changed = config.clone();
    changed.templates.pop();
    let cp = Checkpoint::read(&cp_path).unwrap();
    let d = tempfile::tempdir().unwrap();
    let err = resume_from(cp, &changed, d.path(), &p).unwrap_err();
    assert!(matches!(err, CheckpointError::ConfigHashMismatch { .. }), "{err}");

    // a larger budget is not a config change
    let mut bigger = config.clone();
    bigger.budgets.max_documents = Some(1_000);
    let cp = Checkpoint::read(&cp_path).unwrap();
    let d = tempfile::tempdir().unwrap();
    assert!(resume_from(cp, &bigger, d.path(), &p).is_ok());

    let text = fs::read_to_string(&cp_path).unwrap();
    let torn = full.path().join("torn.json");
    fs::write(&torn, &text[..text.len() / 2]).unwrap();
    assert!(matches!(Checkpoint::read(&torn), Err(CheckpointError::CorruptCheckpoint(_))));
}

#[test]
fn document_budget_stops_between_documents_and_resumes() {
    let mut config = common::mining_config();
    config.budgets.max_documents = Some(1);
    let p = common::replay(&config);
    let dir = tempfile::tempdir().unwrap();
    let (report, _) = common::mine(dir.path(), &config, p.services(), true);
    assert_eq!(report.stop_reason, StopReason::Budget(BudgetKind::Documents));
    assert_eq!(report.counters.docs_fetched, 1);
    assert_eq!(report.iterations, 0);
    let latest = DataDir::new(dir.path()).checkpoints().join("latest.json");
    let cp = Checkpoint::read(&latest).unwrap();
    assert!(!cp.state.frontier.is_empty());

    config.budgets.max_documents = None;
    let d = tempfile::tempdir().unwrap();
    let (report, snap) = resume_from(cp, &config, d.path(), &p).unwrap();
    assert_eq!(report.stop_reason, StopReason::Fixpoint);

    let full = tempfile::tempdir().unwrap();
    let (_, expected) = common::mine(full.path(), &common::mining_config(), p.services(), false);
    let names = |s: &str| {
        let g = GraphSnapshot::from_json(s).unwrap();
        let mut v: Vec<String> = g.entities.iter().map(|e| e.canonical_name.clone()).collect();
        v.sort();
        (v, g.relations.len())
    };
    assert_eq!(names(&snap), names(&expected));
}

#[test]
fn seeding_twice_does_not_duplicate_companies() {
    let config = common::mining_config();
    let p = common::replay(&config);
    let dir = tempfile::tempdir().unwrap();
    let dirs = DataDir::new(dir.path());
    let (db, _) = dirs.open_db(config.alias_policy).unwrap();
    let mut m = Miner::new(config.clone(), Default::default(), db, dirs.open_docs().unwrap(), p.services());
    let seeds = load_seeds(config.seeds_path.as_ref().unwrap()).unwrap();
    assert_eq!(m.init_from_seeds(&seeds).unwrap(), 2);
    assert_eq!(m.init_from_seeds(&seeds).unwrap(), 0);
    assert_eq!(m.db().kb().graph().live_entities().count(), 2);
}
