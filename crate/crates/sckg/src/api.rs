//! HTTP+JSON service over a data directory.
//!
//! Reads go straight to the in-memory store. The only mutations are the two
//! review endpoints, which run through [`queries::decide`] under the store
//! lock and are journaled before the response is sent.
//!
//! Auth uses static bearer tokens from `API_TOKEN`: a comma-separated list of
//! `role:token` entries (`viewer` or `reviewer`); a bare token is a reviewer.
//! With no tokens configured every request is treated as a reviewer.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sckg_core::model::{EntityId, EntityKind, RelationId, RelationKind, Timestamp};
use sckg_core::resolution::{Decision, PairKey, ResolutionError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clock::{Clock, ClockKind};
use crate::db::Database;
use crate::metrics::{metrics_row, parse_scope, DEFAULT_SEED};
use crate::orchestrator::RunReport;
use crate::providers::DataDir;
use crate::queries::{self, EntityQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Viewer,
    Reviewer,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Auth {
    tokens: BTreeMap<String, Role>,
}

impl Auth {
    pub fn open() -> Self {
        Auth::default()
    }

    pub fn parse(list: &str) -> Result<Self, String> {
        let mut tokens = BTreeMap::new();
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (role, token) = match part.split_once(':') {
                Some(("viewer", t)) => (Role::Viewer, t),
                Some(("reviewer", t)) => (Role::Reviewer, t),
                Some((r, _)) => return Err(format!("unknown role {r:?} in API_TOKEN")),
                None => (Role::Reviewer, part),
            };
            tokens.insert(token.to_string(), role);
        }
        Ok(Auth { tokens })
    }

    pub fn is_open(&self) -> bool {
        self.tokens.is_empty()
    }

    fn role(&self, headers: &HeaderMap) -> Result<Role, ApiError> {
        if self.is_open() {
            return Ok(Role::Reviewer);
        }
        let token = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
        self.tokens
            .get(token.trim())
            .copied()
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown token"))
    }
}

pub struct AppState {
    db: Mutex<Database>,
    data: DataDir,
    auth: Auth,
    clock: ClockKind,
}

impl AppState {
    pub fn new(db: Database, data: DataDir, auth: Auth, clock: ClockKind) -> Self {
        AppState {
            db: Mutex::new(db),
            data,
            auth,
            clock,
        }
    }

    fn db(&self) -> MutexGuard<'_, Database> {
        self.db.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn now(&self, db: &Database) -> Timestamp {
        match self.clock {
            ClockKind::Logical => queries::next_logical_time(db.kb()),
            ClockKind::System => Clock::new(ClockKind::System, 0).now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, ApiError> {
    s.parse().map_err(|_| ApiError::bad_request(format!("invalid {what} {s:?}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/entities", get(entities))
        .route("/api/entities/{id}", get(entity))
        .route("/api/entities/{id}/neighborhood", get(neighborhood))
        .route("/api/relations/{id}", get(relation))
        .route("/api/review/queue", get(review_queue))
        .route("/api/review/{pair}/{action}", post(review))
        .route("/api/runs/current", get(run_current))
        .route("/api/metrics", get(metrics))
        .fallback(|| async { ApiError::not_found("route") })
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

#[derive(Debug, Default, Deserialize)]
struct EntitiesParams {
    q: Option<String>,
    kind: Option<String>,
    jurisdiction: Option<String>,
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn entities(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(p): Query<EntitiesParams>,
) -> ApiResult<queries::Page<queries::EntitySummary>> {
    st.auth.role(&headers)?;
    let query = EntityQuery {
        q: p.q,
        kind: p.kind.as_deref().map(|k| parse::<EntityKind>("kind", k)).transpose()?,
        jurisdiction: p.jurisdiction.filter(|j| !j.is_empty()),
        cursor: p.cursor.as_deref().filter(|c| !c.is_empty()).map(|c| parse("cursor", c)).transpose()?,
        limit: p.limit,
    };
    Ok(Json(queries::list_entities(st.db().kb().graph(), &query)))
}

async fn entity(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<queries::EntityDetail> {
    st.auth.role(&headers)?;
    let id: EntityId = parse("entity id", &id)?;
    queries::entity_detail(st.db().kb().graph(), id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(id))
}

#[derive(Debug, Default, Deserialize)]
struct NeighborhoodParams {
    depth: Option<u32>,
    /// Comma-separated relation kinds.
    kinds: Option<String>,
}

async fn neighborhood(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(p): Query<NeighborhoodParams>,
) -> ApiResult<queries::Neighborhood> {
    st.auth.role(&headers)?;
    let id: EntityId = parse("entity id", &id)?;
    let kinds: BTreeSet<RelationKind> = p
        .kinds
        .as_deref()
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(|k| parse("relation kind", k))
        .collect::<Result<_, _>>()?;
    queries::neighborhood(st.db().kb().graph(), id, p.depth.unwrap_or(1), &kinds)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(id))
}

async fn relation(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<queries::RelationDetail> {
    st.auth.role(&headers)?;
    let id: RelationId = parse("relation id", &id)?;
    queries::relation_detail(st.db().kb().graph(), id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(id))
}

#[derive(Debug, Default, Deserialize)]
struct QueueParams {
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn review_queue(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(p): Query<QueueParams>,
) -> ApiResult<queries::Page<queries::ReviewCard>> {
    st.auth.role(&headers)?;
    let cursor: Option<PairKey> = p.cursor.as_deref().filter(|c| !c.is_empty()).map(|c| parse("cursor", c)).transpose()?;
    Ok(Json(queries::review_queue(st.db().kb(), cursor, p.limit)))
}

async fn review(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Path((pair, action)): Path<(String, String)>,
) -> ApiResult<queries::ReviewResponse> {
    let role = st.auth.role(&headers)?;
    let decision = match action.as_str() {
        "approve" => Decision::Merge,
        "reject" => Decision::KeepSeparate,
        _ => return Err(ApiError::not_found("route")),
    };
    if role < Role::Reviewer {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "review decisions need the reviewer role"));
    }
    let pair: PairKey = parse("pair", &pair)?;
    let reviewer = headers
        .get("x-reviewer")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("api")
        .to_string();
    let mut db = st.db();
    let at = st.now(&db);
    let res = queries::decide(db.kb_mut(), pair, decision, &reviewer, at);
    // persist whatever was applied, even if a later step failed
    db.commit().map_err(ApiError::internal)?;
    match res {
        Ok(r) => Ok(Json(r)),
        Err(ResolutionError::UnknownPair(p)) => Err(ApiError::not_found(format!("pair {p}"))),
        Err(e @ ResolutionError::StaleState { .. }) => Err(ApiError::new(StatusCode::CONFLICT, "stale_state", e.to_string())),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn run_current(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<RunReport> {
    st.auth.role(&headers)?;
    let path = st.data.run_report();
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ApiError::not_found("run report")),
        Err(e) => return Err(ApiError::internal(e)),
    };
    serde_json::from_str(&text).map(Json).map_err(ApiError::internal)
}

#[derive(Debug, Default, Deserialize)]
struct MetricsParams {
    scope: Option<String>,
    include_unverified: Option<bool>,
    seed: Option<u64>,
}

async fn metrics(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(p): Query<MetricsParams>,
) -> ApiResult<crate::metrics::MetricsRow> {
    st.auth.role(&headers)?;
    let scope = parse_scope(p.scope.as_deref().unwrap_or("All"));
    Ok(Json(metrics_row(
        st.db().kb().graph(),
        scope,
        p.include_unverified.unwrap_or(false),
        p.seed.unwrap_or(DEFAULT_SEED),
    )))
}

/// Bind and serve until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
