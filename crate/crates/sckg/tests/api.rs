mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use sckg::api::{router, AppState, Auth};
use sckg::clock::ClockKind;
use sckg::providers::DataDir;
use sckg_core::graph::AliasPolicy;
use sckg_core::model::Timestamp;
use sckg_core::resolution::{lookup_synonym, run_resolution, ResolutionConfig};
use sckg_core::normalize::NameNormalizer;
use sckg_core::similarity::TrigramEmbedder;
use serde_json::Value;
use tower::ServiceExt;

const TOKENS: &str = "viewer:look,reviewer:decide";

/// Data dir holding the Huawei fixture after one resolution pass.
fn data_dir() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = DataDir::new(tmp.path());
    std::fs::create_dir_all(dirs.db_dir()).unwrap();
    std::fs::copy(common::fixtures().join("huawei/graph.json"), dirs.db_dir().join("graph.json")).unwrap();
    let (mut db, _) = dirs.open_db(AliasPolicy::Exact).unwrap();
    let llm = common::fixture_replay_llm("huawei");
    run_resolution(
        db.kb_mut(),
        &llm,
        Some(&TrigramEmbedder::default()),
        &NameNormalizer::default(),
        &ResolutionConfig::default(),
        Timestamp(100),
    )
    .unwrap();
    db.commit().unwrap();
    tmp
}

fn app(tmp: &tempfile::TempDir, auth: Auth) -> Router {
    let dirs = DataDir::new(tmp.path());
    let (db, _) = dirs.open_db(AliasPolicy::Exact).unwrap();
    router(Arc::new(AppState::new(db, dirs, auth, ClockKind::Logical)))
}

async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let resp = app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, Some("look")).await
}

async fn post(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some("decide")).await
}

fn auth() -> Auth {
    Auth::parse(TOKENS).unwrap()
}

#[tokio::test]
async fn health_and_unknown_routes() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (s, b) = call(&app, Method::GET, "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["status"], "ok");
    let (s, b) = get(&app, "/api/nowhere").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(b["error"], "not_found");
}

#[tokio::test]
async fn tokens_gate_reads_and_decisions() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    assert_eq!(call(&app, Method::GET, "/api/entities", None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, Method::GET, "/api/entities", Some("nope")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(get(&app, "/api/entities").await.0, StatusCode::OK);

    let (_, queue) = get(&app, "/api/review/queue").await;
    let pair = queue["items"][0]["pair"].as_str().unwrap().to_string();
    let uri = format!("/api/review/{pair}/approve");
    let (s, b) = call(&app, Method::POST, &uri, Some("look")).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(b["error"], "forbidden");
    assert_eq!(call(&app, Method::POST, &uri, None).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn open_auth_when_no_tokens() {
    let tmp = data_dir();
    let app = app(&tmp, Auth::parse("").unwrap());
    assert_eq!(call(&app, Method::GET, "/api/entities", None).await.0, StatusCode::OK);
    assert!(Auth::parse("admin:x").is_err());
}

#[tokio::test]
async fn entity_search_and_detail() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (s, b) = get(&app, "/api/entities?q=hua").await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = b["items"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 3, "{names:?}");
    assert!(names.iter().all(|n| n.to_lowercase().contains("hua")));

    let id = b["items"][0]["id"].as_u64().unwrap();
    let (s, d) = get(&app, &format!("/api/entities/E{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["entity"]["id"].as_u64(), Some(id));
    assert!(d["degree"].as_u64().unwrap() > 0);

    assert_eq!(get(&app, "/api/entities/E999").await.0, StatusCode::NOT_FOUND);
    let (s, b) = get(&app, "/api/entities/banana").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(b["error"], "bad_request");
    assert_eq!(get(&app, "/api/entities?kind=Planet").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn entity_pages_chain_through_cursors() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (_, all) = get(&app, "/api/entities?limit=1000").await;
    let expected: Vec<Value> = all["items"].as_array().unwrap().iter().map(|e| e["id"].clone()).collect();
    assert!(all["next_cursor"].is_null());

    let mut seen = Vec::new();
    let mut uri = "/api/entities?limit=3".to_string();
    loop {
        let (s, page) = get(&app, &uri).await;
        assert_eq!(s, StatusCode::OK);
        let items = page["items"].as_array().unwrap();
        assert!(items.len() <= 3);
        seen.extend(items.iter().map(|e| e["id"].clone()));
        match page["next_cursor"].as_str() {
            Some(c) => uri = format!("/api/entities?limit=3&cursor={c}"),
            None => break,
        }
    }
    assert_eq!(seen, expected);
}

#[tokio::test]
async fn neighborhood_depth_is_capped() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let kb = common::load_kb(&common::fixtures().join("huawei/graph.json"));
    let tsmc = lookup_synonym(&kb, "TSMC").unwrap();
    let (s, b) = get(&app, &format!("/api/entities/{tsmc}/neighborhood?depth=9")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["depth"], 3);
    let (_, one) = get(&app, &format!("/api/entities/{tsmc}/neighborhood")).await;
    assert_eq!(one["depth"], 1);
    // TSMC and the two Huawei spellings it supplies
    assert_eq!(one["nodes"].as_array().unwrap().len(), 3);
    assert!(b["nodes"].as_array().unwrap().len() > 3);

    let (_, partner) = get(&app, &format!("/api/entities/{tsmc}/neighborhood?depth=3&kinds=Partner")).await;
    assert_eq!(partner["nodes"].as_array().unwrap().len(), 1);
    assert_eq!(get(&app, &format!("/api/entities/{tsmc}/neighborhood?kinds=Friend")).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn relation_detail_carries_evidence() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (s, b) = get(&app, "/api/relations/R1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["source_name"], "TSMC");
    assert!(!b["relation"]["evidence"].as_array().unwrap().is_empty());
    assert_eq!(get(&app, "/api/relations/R999").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn review_decisions_persist_and_repeat_as_noops() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (_, queue) = get(&app, "/api/review/queue").await;
    let items = queue["items"].as_array().unwrap();
    assert_eq!(items.len(), 3);
    assert_eq!(items[0]["state"], "awaiting_review");
    assert!(items[0]["entity_a"]["relations"].as_array().is_some());
    let pair = items[0]["pair"].as_str().unwrap().to_string();

    let (s, b) = post(&app, &format!("/api/review/{pair}/approve")).await;
    assert_eq!(s, StatusCode::OK, "{b}");
    assert_eq!(b["noop"], false);
    assert_eq!(b["state"], "approved");
    assert!(b["outcome"]["Merged"].is_object());

    let (s, b) = post(&app, &format!("/api/review/{pair}/approve")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["noop"], true);

    let (s, b) = post(&app, &format!("/api/review/{pair}/reject")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(b["error"], "stale_state");

    // the merge survives a reopen of the data dir
    let (db, report) = DataDir::new(tmp.path()).open_db(AliasPolicy::Exact).unwrap();
    assert!(report.replayed > 0);
    let ids: std::collections::BTreeSet<_> = ["Huawei", "HUAWEI"]
        .iter()
        .map(|n| lookup_synonym(db.kb(), n).unwrap())
        .collect();
    assert_eq!(ids.len(), 1);
    let d = db.kb().decisions().last().unwrap();
    assert_eq!(d.reviewer.as_deref(), Some("api"));
}

#[tokio::test]
async fn review_errors() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (s, b) = post(&app, "/api/review/E1-E2/approve").await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{b}");
    assert_eq!(post(&app, "/api/review/E1-E2/shrug").await.0, StatusCode::NOT_FOUND);
    assert_eq!(post(&app, "/api/review/pear/approve").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reviewer_header_names_the_decision() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (_, queue) = get(&app, "/api/review/queue?limit=1").await;
    assert_eq!(queue["items"].as_array().unwrap().len(), 1);
    assert!(queue["next_cursor"].is_string());
    let pair = queue["items"][0]["pair"].as_str().unwrap().to_string();
    let req = Request::builder()
        .method(Method::POST)
        .uri(format!("/api/review/{pair}/reject"))
        .header("authorization", "Bearer decide")
        .header("x-reviewer", "dana")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
    let (db, _) = DataDir::new(tmp.path()).open_db(AliasPolicy::Exact).unwrap();
    assert_eq!(db.kb().decisions().last().unwrap().reviewer.as_deref(), Some("dana"));
}

#[tokio::test]
async fn run_report_and_metrics() {
    let tmp = data_dir();
    let app = app(&tmp, auth());
    let (s, _) = get(&app, "/api/runs/current").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let config = common::mining_config();
    let providers = common::replay(&config);
    let mined = tempfile::tempdir().unwrap();
    let (report, _) = common::mine(mined.path(), &config, providers.services(), false);
    let dirs = DataDir::new(tmp.path());
    std::fs::create_dir_all(dirs.run_report().parent().unwrap()).unwrap();
    std::fs::write(dirs.run_report(), serde_json::to_string(&report).unwrap()).unwrap();
    let (s, b) = get(&app, "/api/runs/current").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, serde_json::to_value(&report).unwrap());

    let (s, m) = get(&app, "/api/metrics?include_unverified=true").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(m["scope"], "All");
    let kb = common::load_kb(&common::fixtures().join("huawei/graph.json"));
    let expected = sckg::metrics::metrics_row(kb.graph(), sckg_core::analytics::Scope::All, true, 42);
    assert_eq!(m, serde_json::to_value(&expected).unwrap());
}
