//! HTTP service under `/v1`: assessment sessions holding a compiled model
//! and mutable evidence, plus a stateless RAPEX endpoint.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use riskbn_core::infer::{Evidence, InferError};
use riskbn_core::product::{ProductError, ProductModel, ScenarioConfig};
use riskbn_core::rapex::{self, InjuryScenario, Sensitivity};
use riskbn_core::report::canonical_json;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::RwLock as AsyncRwLock;

use crate::{apply_update, binning, build_report, is_input_error, AppError, EvidenceUpdate, DEFAULT_BINS};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Bins per continuous node for sessions that do not ask for a number.
    pub bins: usize,
    pub session_ttl: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bins: DEFAULT_BINS, session_ttl: Duration::from_secs(3600) }
    }
}

struct Session {
    model: Arc<ProductModel>,
    bins: usize,
    seed: u64,
    evidence: Arc<AsyncRwLock<Evidence>>,
    last_seen: Mutex<Instant>,
}

impl Session {
    fn expired(&self, ttl: Duration) -> bool {
        self.last_seen.lock().expect("session clock").elapsed() > ttl
    }
}

/// Shared service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Session>>>>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState { sessions: Arc::default(), config: Arc::new(config) }
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let found = self.sessions.read().expect("session map").get(id).cloned();
        match found {
            Some(s) if s.expired(self.config.session_ttl) => {
                self.sessions.write().expect("session map").remove(id);
                Err(ApiError::unknown_session(id))
            }
            Some(s) => {
                *s.last_seen.lock().expect("session clock") = Instant::now();
                Ok(s)
            }
            None => Err(ApiError::unknown_session(id)),
        }
    }

    /// Drops idle sessions; returns how many were removed.
    pub fn sweep(&self) -> usize {
        let ttl = self.config.session_ttl;
        let mut map = self.sessions.write().expect("session map");
        let before = map.len();
        map.retain(|_, s| !s.expired(ttl));
        before - map.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": message.into() }) }
    }

    fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.body[key] = value.into();
        self
    }

    fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<InferError> for ApiError {
    fn from(e: InferError) -> Self {
        let message = e.to_string();
        match e {
            InferError::UnknownNode(node) | InferError::InvalidEvidence { node, .. } => {
                ApiError::unprocessable(message).with("node", node)
            }
            InferError::ImpossibleEvidence => ApiError::new(StatusCode::CONFLICT, message),
            e if is_input_error(&e) => ApiError::unprocessable(message),
            _ => ApiError::internal(message),
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Product(ProductError::Infer(e)) => e.into(),
            AppError::Product(ProductError::InvalidConfig(problems)) => invalid_config(problems),
            e if e.is_validation() => ApiError::unprocessable(e.to_string()),
            e => ApiError::internal(e.to_string()),
        }
    }
}

fn invalid_config(problems: Vec<String>) -> ApiError {
    ApiError::unprocessable("invalid scenario config")
        .with("validation", json!({ "valid": false, "problems": problems }))
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        canonical(self.status, &self.body)
    }
}

fn canonical<T: serde::Serialize>(status: StatusCode, body: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], canonical_json(body)).into_response()
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/evidence", put(put_evidence).delete(clear_evidence))
        .route("/v1/sessions/{id}/posteriors", get(get_posteriors))
        .route("/v1/sessions/{id}/report", get(get_report))
        .route("/v1/rapex/assess", post(rapex_assess))
        .with_state(state)
}

/// Binds `addr` and serves until interrupted, sweeping idle sessions.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let period = (state.config.session_ttl / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = sweeper.sweep();
            if n > 0 {
                tracing::info!(expired = n, "dropped idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Response {
    canonical(StatusCode::OK, &json!({ "status": "ok", "engine_version": riskbn_core::ENGINE_VERSION }))
}

#[derive(Debug, Deserialize)]
struct CreateQuery {
    bins: Option<usize>,
    seed: Option<u64>,
}

async fn create_session(
    State(app): State<AppState>,
    Query(q): Query<CreateQuery>,
    body: String,
) -> Result<Response, ApiError> {
    let config = match ScenarioConfig::from_json(&body) {
        Ok(c) => c,
        Err(ProductError::InvalidConfig(problems)) => return Err(invalid_config(problems)),
        Err(e) => return Err(ApiError::unprocessable(e.to_string())),
    };
    let bins = q.bins.unwrap_or(app.config.bins);
    if bins < 2 {
        return Err(ApiError::unprocessable("bins must be at least 2"));
    }
    let seed = q.seed.unwrap_or(0);
    let model = blocking(move || Ok(ProductModel::build(&config, &binning(bins)).map_err(AppError::from)?)).await?;
    let evidence = model.scenario_evidence();
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session {
        model: Arc::new(model),
        bins,
        seed,
        evidence: Arc::new(AsyncRwLock::new(evidence.clone())),
        last_seen: Mutex::new(Instant::now()),
    };
    app.sessions.write().expect("session map").insert(id.clone(), Arc::new(session));
    tracing::info!(session = %id, bins, "session created");
    Ok(canonical(
        StatusCode::CREATED,
        &json!({
            "session_id": id,
            "validation": { "valid": true, "problems": [] },
            "evidence": evidence,
            "bins": bins,
            "seed": seed,
        }),
    ))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let evidence = s.evidence.read().await.clone();
    let spec = &s.model.spec;
    let nodes: Vec<Value> = spec
        .nodes
        .iter()
        .map(|n| json!({ "id": n.id, "kind": n.kind, "parents": spec.parents(&n.id) }))
        .collect();
    Ok(canonical(
        StatusCode::OK,
        &json!({
            "session_id": id,
            "scenario": s.model.config.name,
            "evidence": evidence,
            "nodes": nodes,
            "bins": s.bins,
            "seed": s.seed,
        }),
    ))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.write().expect("session map").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::unknown_session(&id)),
    }
}

fn affected(model: &ProductModel, changed: &[String], evidence: &Evidence) -> BTreeSet<String> {
    let observed: BTreeSet<String> = evidence.iter().map(|(k, _)| k.clone()).collect();
    let sources: Vec<&str> = changed.iter().map(String::as_str).collect();
    model.spec.d_connected(&sources, &observed)
}

async fn put_evidence(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let update: EvidenceUpdate = serde_json::from_str(&body)
        .map_err(|e| ApiError::unprocessable(format!("evidence must be an object of node to value: {e}")))?;
    if let Some(node) = update.keys().find(|k| s.model.spec.node(k).is_none()) {
        return Err(InferError::UnknownNode(node.clone()).into());
    }
    // held until the update is checked, so updates to one session queue up
    let mut guard = s.evidence.clone().write_owned().await;
    let next = apply_update(&guard, &update);
    let model = s.model.clone();
    let (next, nodes) = blocking(move || {
        model.compiled.evidence_probability(&next)?;
        let changed: Vec<String> = update.into_keys().collect();
        let nodes = affected(&model, &changed, &next);
        Ok((next, nodes))
    })
    .await?;
    *guard = next.clone();
    Ok(canonical(StatusCode::OK, &json!({ "affected_nodes": nodes, "evidence": next })))
}

async fn clear_evidence(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let mut guard = s.evidence.write().await;
    let changed: Vec<String> = guard.iter().map(|(k, _)| k.clone()).collect();
    *guard = Evidence::new();
    let nodes = affected(&s.model, &changed, &guard);
    Ok(canonical(StatusCode::OK, &json!({ "affected_nodes": nodes, "evidence": *guard })))
}

#[derive(Debug, Deserialize)]
struct PosteriorQuery {
    /// Comma-separated node ids; every node when absent.
    nodes: Option<String>,
}

async fn get_posteriors(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PosteriorQuery>,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let nodes: Vec<String> = match q.nodes {
        Some(list) => list.split(',').map(str::trim).filter(|n| !n.is_empty()).map(String::from).collect(),
        None => s.model.spec.nodes.iter().map(|n| n.id.clone()).collect(),
    };
    let guard = s.evidence.clone().read_owned().await;
    let model = s.model.clone();
    let posteriors = blocking(move || {
        let refs: Vec<&str> = nodes.iter().map(String::as_str).collect();
        Ok(model.compiled.posterior(&guard, &refs)?)
    })
    .await?;
    Ok(canonical(StatusCode::OK, &json!({ "posteriors": posteriors })))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    /// Adds a RAPEX comparison at this severity.
    severity: Option<i64>,
}

async fn get_report(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let guard = s.evidence.clone().read_owned().await;
    let model = s.model.clone();
    let seed = s.seed;
    let report = blocking(move || Ok(build_report(&model, &guard, seed, q.severity)?)).await?;
    Ok(canonical(StatusCode::OK, &report))
}

#[derive(Debug, Deserialize)]
struct RapexRequest {
    #[serde(flatten)]
    scenario: InjuryScenario,
    #[serde(default)]
    sensitivity: Option<Sensitivity>,
}

async fn rapex_assess(body: String) -> Result<Response, ApiError> {
    let req: RapexRequest =
        serde_json::from_str(&body).map_err(|e| ApiError::unprocessable(format!("invalid injury scenario: {e}")))?;
    let assessment = rapex::assess(&req.scenario, req.sensitivity).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    Ok(canonical(StatusCode::OK, &assessment))
}
