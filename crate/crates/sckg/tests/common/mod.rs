//! Fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sckg::config::RunConfig;
use sckg::mock::{Corpus, FixtureWeb, ScriptedLlm};
use sckg::orchestrator::{Miner, RunReport, Services};
use sckg::providers::{DataDir, ProviderSet};
use sckg::seeds::load_seeds;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn mining_config() -> RunConfig {
    RunConfig::load(&fixtures().join("mining/config.json")).unwrap()
}

pub fn corpus() -> Corpus {
    Corpus::load(&fixtures().join("mining/corpus.json")).unwrap()
}

/// The scripted world the mining cassettes were recorded from.
pub fn scripted(config: &RunConfig) -> (ScriptedLlm, FixtureWeb) {
    let c = corpus();
    (ScriptedLlm::new(c.script), FixtureWeb::new(c.pages, config.fetch.clone()))
}

pub fn replay(config: &RunConfig) -> ProviderSet {
    ProviderSet::from_config(config).unwrap()
}

/// Seed and mine into `data` until a stop. Returns the report and the final snapshot.
pub fn mine(data: &Path, config: &RunConfig, services: Services<'_>, checkpoints: bool) -> (RunReport, String) {
    let dirs = DataDir::new(data);
    let (db, _) = dirs.open_db(config.alias_policy).unwrap();
    let docs = dirs.open_docs().unwrap();
    let few_shot = config.few_shot().unwrap();
    let mut miner = Miner::new(config.clone(), few_shot, db, docs, services);
    if checkpoints {
        miner = miner.checkpoint_into(dirs.checkpoints());
    }
    let seeds = load_seeds(config.seeds_path.as_ref().unwrap()).unwrap();
    miner.init_from_seeds(&seeds).unwrap();
    let report = miner.run_until_fixpoint().unwrap();
    (report, miner.snapshot_json())
}

/// Evidence quotes that no longer occur at their recorded offset.
pub fn unsound_evidence(snapshot: &str, docs: &sckg::docstore::DocumentStore) -> Vec<String> {
    use sckg_core::extraction::recheck_evidence;
    let g = sckg_core::snapshot::GraphSnapshot::from_json(snapshot).unwrap();
    let mut bad = Vec::new();
    for r in &g.relations {
        for e in &r.evidence {
            let ok = docs
                .get(&e.document_id)
                .unwrap()
                .is_some_and(|d| recheck_evidence(e, &d.cleaned_text));
            if !ok {
                bad.push(format!("{} {:?}", r.id, e.quote));
            }
        }
    }
    bad
}

pub fn evidence_count(snapshot: &str) -> usize {
    let g = sckg_core::snapshot::GraphSnapshot::from_json(snapshot).unwrap();
    g.relations.iter().map(|r| r.evidence.len()).sum()
}

/// Build a store from one plain-text document with the scripted extractor.
pub fn kb_from_text(
    policy: sckg_core::graph::AliasPolicy,
    text: &str,
    url: &str,
    script: sckg::mock::Script,
) -> sckg_core::KnowledgeBase {
    use sckg_core::extraction::{validate_evidence, SourceDocument};
    use sckg_core::model::{attributes_from_json, DocumentId, Timestamp};
    use sckg_core::{Applied, KnowledgeBase, Mutation};

    let llm = ScriptedLlm::new(script);
    let payload = llm.extract(text);
    let id = DocumentId::for_text(text);
    let report = validate_evidence(
        &payload,
        SourceDocument { id: &id, cleaned_text: text, url: Some(url) },
        Timestamp(1),
    );
    assert!(report.rejected.is_empty(), "{:?}", report.rejected);
    let mut kb = KnowledgeBase::new(policy);
    let mut t = 1;
    let upsert = |kb: &mut KnowledgeBase, e: &sckg_core::extraction::PayloadEntity, t: i64| {
        let r = kb
            .apply(Mutation::UpsertEntity {
                kind: e.kind,
                name: e.name.clone(),
                aliases: vec![],
                jurisdiction: e.attributes.get("jurisdiction").and_then(|v| v.as_str()).map(str::to_string),
                at: Timestamp(t),
            })
            .unwrap();
        match r {
            Applied::Entity(u) => u.id,
            _ => unreachable!(),
        }
    };
    for v in report.accepted {
        t += 1;
        let s = upsert(&mut kb, &v.source, t);
        let o = upsert(&mut kb, &v.target, t);
        kb.apply(Mutation::UpsertRelation {
            kind: v.relation.kind,
            source: s,
            target: o,
            evidence: vec![v.evidence],
            attributes: attributes_from_json(&v.relation.attributes),
            at: Timestamp(t),
        })
        .unwrap();
    }
    kb
}

pub fn load_kb(path: &Path) -> sckg_core::KnowledgeBase {
    let text = std::fs::read_to_string(path).unwrap();
    sckg_core::snapshot::GraphSnapshot::from_json(&text).unwrap().restore().unwrap()
}

pub const HUAWEI_URL: &str = "https://fixtures.example.com/huawei-family";
pub const VERIFY_URL: &str = "https://fixtures.example.com/verification";

fn script_at(path: &Path) -> sckg::mock::Script {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Store built from `fixtures/<name>/document.txt`, as the recorded graph.json was.
pub fn rebuild_fixture(name: &str, policy: sckg_core::graph::AliasPolicy, url: &str) -> sckg_core::KnowledgeBase {
    let dir = fixtures().join(name);
    let text = std::fs::read_to_string(dir.join("document.txt")).unwrap();
    kb_from_text(policy, &text, url, script_at(&dir.join("script.json")))
}

pub fn fixture_script(name: &str) -> sckg::mock::Script {
    script_at(&fixtures().join(name).join("script.json"))
}

pub struct ReviewFlow {
    pub first: sckg_core::resolution::ResolutionReport,
    pub approved: Vec<sckg_core::resolution::PairKey>,
    pub rejected: Vec<sckg_core::resolution::PairKey>,
    pub second: sckg_core::resolution::ResolutionReport,
}

/// Resolve, approve every pair the model called synonyms, reject the rest,
/// then resolve again.
pub fn review_flow(kb: &mut sckg_core::KnowledgeBase, llm: &dyn sckg_core::provider::LlmProvider) -> ReviewFlow {
    use sckg_core::model::Timestamp;
    use sckg_core::normalize::NameNormalizer;
    use sckg_core::resolution::{apply_review_decision, run_resolution, CandidateState, Decision, ResolutionConfig};
    use sckg_core::similarity::TrigramEmbedder;

    let (emb, norm, cfg) = (TrigramEmbedder::default(), NameNormalizer::default(), ResolutionConfig::default());
    let first = run_resolution(kb, llm, Some(&emb), &norm, &cfg, Timestamp(100)).unwrap();
    let (mut approved, mut rejected) = (Vec::new(), Vec::new());
    let mut t = 101;
    // merges rewrite the remaining candidates, so re-read after each decision
    loop {
        let next = kb.candidates().find_map(|c| match c.state {
            CandidateState::AwaitingReview => Some((c.pair, Decision::Merge)),
            CandidateState::RejectedByLlm => Some((c.pair, Decision::KeepSeparate)),
            _ => None,
        });
        let Some((pair, decision)) = next else { break };
        apply_review_decision(kb, pair, decision, "fixture-reviewer", Timestamp(t)).unwrap();
        t += 1;
        match decision {
            Decision::Merge => approved.push(pair),
            Decision::KeepSeparate => rejected.push(pair),
        }
    }
    let second = run_resolution(kb, llm, Some(&emb), &norm, &cfg, Timestamp(200)).unwrap();
    ReviewFlow { first, approved, rejected, second }
}

pub fn fixture_replay_llm(name: &str) -> sckg::llm::ReplayLlm {
    sckg::llm::ReplayLlm::new(sckg::cassette::CassetteStore::new(fixtures().join(name).join("cassettes")))
}

pub struct VerifyOutcome {
    pub before: sckg_core::KnowledgeBase,
    pub after: sckg_core::KnowledgeBase,
    pub report: sckg_core::verify::VerificationReport,
}

/// Judge the verification fixture from its cassettes against labels.csv.
pub fn verify_fixture() -> VerifyOutcome {
    use sckg_core::model::Timestamp;
    use sckg_core::verify::{verify_batch, VerifyConfig};
    let dir = fixtures().join("verification");
    let before = load_kb(&dir.join("graph.json"));
    let mut after = load_kb(&dir.join("graph.json"));
    let labels = sckg::labeling::parse_labels(&std::fs::read_to_string(dir.join("labels.csv")).unwrap()).unwrap();
    let llm = fixture_replay_llm("verification");
    let report = verify_batch(&mut after, &llm, Some(&labels), &VerifyConfig::default(), Timestamp(60)).unwrap();
    VerifyOutcome { before, after, report }
}

pub const HUAWEI_NAMES: [&str; 3] = ["Huawei", "HUAWEI", "Huawei Technologies Co., Ltd."];

/// (source, kind, target) triples that occur more than once.
pub fn duplicate_relations(kb: &sckg_core::KnowledgeBase) -> Vec<String> {
    let mut seen = std::collections::BTreeMap::new();
    for r in kb.graph().relations() {
        *seen.entry((r.source, r.kind, r.target)).or_insert(0usize) += 1;
    }
    seen.into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|((s, k, t), n)| format!("{s} {k} {t} x{n}"))
        .collect()
}

/// Entities and relations of a store as JSON, without timestamps of the capture.
pub fn graph_json(kb: &sckg_core::KnowledgeBase) -> (String, String) {
    let s = kb.snapshot(sckg_core::model::Timestamp(0));
    (
        serde_json::to_string(&s.entities).unwrap(),
        serde_json::to_string(&s.relations).unwrap(),
    )
}

/// Store in a db directory, snapshot plus journal.
pub fn load_kb_dir(dir: &Path) -> sckg_core::KnowledgeBase {
    let (db, _) = sckg::db::Database::open(dir, sckg_core::graph::AliasPolicy::default()).unwrap();
    let mut kb = db.kb().clone();
    kb.set_journaling(false);
    kb
}
