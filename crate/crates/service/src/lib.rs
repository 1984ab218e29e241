//! HTTP facade over immutable population sessions.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | POST | `/sessions` | population file |
//! | GET | `/sessions` | |
//! | GET | `/sessions/{id}` | |
//! | GET | `/sessions/{id}/population` | |
//! | GET | `/sessions/{id}/audit` | `predictor`, `scope`, `reference` |
//! | GET | `/sessions/{id}/curves` | `predictor`, `group`, `points`, `format=csv` |
//! | POST | `/sessions/{id}/optimize` | `{"predictor": .., <spec fields>}` |
//! | POST | `/sessions/{id}/merge` | `{"z": .., "q": .., "per_group": bool}` |
//! | GET | `/sessions/{id}/compare` | `base`, `refined`, `spec` (JSON) |
//! | GET | `/demos` | |
//! | POST | `/demos/{name}` | |
//!
//! Errors are `{"error": kind, "message": text}` with 404 for unknown
//! sessions or predictors, 400 for malformed input, 422 for well-formed
//! requests whose preconditions fail, and 422 with the full result body for
//! infeasible programs.

pub mod ops;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use infofair::lp::LpStatus;
use infofair::optimize::OptimizationSpec;
use infofair::policy::curves_csv;
use infofair::synth::{demo_instance, DEMO_NAMES};
use infofair::{load_population, Error, Group, Instance64, Scope};

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub instance: Instance64,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

/// Append-only session map.
#[derive(Debug, Default)]
pub struct Store {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    next: AtomicU64,
}

impl Store {
    pub fn insert(&self, instance: Instance64) -> Arc<Session> {
        let n = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let session = Arc::new(Session {
            id: format!("s{n}"),
            instance,
            created,
        });
        self.sessions
            .write()
            .expect("session lock")
            .insert(session.id.clone(), session.clone());
        session
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("session lock").get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<(u64, String)> = self
            .sessions
            .read()
            .expect("session lock")
            .keys()
            .map(|k| (k[1..].parse().unwrap_or(0), k.clone()))
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, k)| k).collect()
    }
}

pub type AppState = Arc<Store>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({"error": kind, "message": message.into()}),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownPredictor(_) => StatusCode::NOT_FOUND,
            Error::NotCalibrated { .. }
            | Error::NotRefinement { .. }
            | Error::NeedsTwoGroups(_)
            | Error::DegenerateRate { .. }
            | Error::EmptyScope(_)
            | Error::InfiniteDivergence { .. }
            | Error::Undersampled { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::ImprovementViolated { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session(state: &Store, id: &str) -> ApiResult<Arc<Session>> {
    state
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session {id:?}")))
}

#[derive(Serialize)]
struct SessionSummary {
    id: String,
    created: u64,
    cells: usize,
    groups: Vec<Group>,
    predictors: Vec<String>,
    grid_alpha: Option<f64>,
}

fn summary(s: &Session) -> SessionSummary {
    SessionSummary {
        id: s.id.clone(),
        created: s.created,
        cells: s.instance.population.len(),
        groups: Group::ALL
            .into_iter()
            .filter(|g| s.instance.population.has_group(*g))
            .collect(),
        predictors: s.instance.predictors.keys().cloned().collect(),
        grid_alpha: s.instance.grid_alpha,
    }
}

async fn create_session(State(state): State<AppState>, body: String) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    let instance = load_population::<f64>(&body)?;
    let s = state.insert(instance);
    log::info!("created session {}", s.id);
    Ok((StatusCode::CREATED, Json(summary(&s))))
}

async fn list_sessions(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({"sessions": state.ids()}))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let s = session(&state, &id)?;
    Ok(Json(summary(&s)))
}

async fn get_population(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = session(&state, &id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], s.instance.to_json()).into_response())
}

fn parse_scope(text: Option<&str>) -> ApiResult<Option<Scope>> {
    text.map(|t| t.parse::<Scope>().map_err(|e| ApiError::bad_request(format!("scope: {e}"))))
        .transpose()
}

#[derive(Deserialize)]
struct AuditQuery {
    predictor: Option<String>,
    scope: Option<String>,
    reference: Option<String>,
}

async fn audit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AuditQuery>,
) -> ApiResult<Json<ops::AuditReport>> {
    let s = session(&state, &id)?;
    let scope = parse_scope(q.scope.as_deref())?;
    Ok(Json(ops::audit(&s.instance, q.predictor.as_deref(), scope, q.reference.as_deref())?))
}

#[derive(Deserialize)]
struct CurvesQuery {
    predictor: String,
    group: String,
    points: Option<usize>,
    format: Option<String>,
}

async fn curves(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CurvesQuery>,
) -> ApiResult<Response> {
    let s = session(&state, &id)?;
    let group: Group = q.group.parse().map_err(|e| ApiError::bad_request(format!("group: {e}")))?;
    let c = ops::curves(&s.instance, &q.predictor, group, q.points.unwrap_or(ops::DEFAULT_CURVE_POINTS))?;
    Ok(match q.format.as_deref() {
        None | Some("json") => Json(c).into_response(),
        Some("csv") => ([(header::CONTENT_TYPE, "text/csv")], curves_csv(&c.rows)).into_response(),
        Some(other) => return Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    })
}

#[derive(Deserialize)]
pub struct OptimizeRequest {
    pub predictor: String,
    #[serde(flatten)]
    pub spec: OptimizationSpec,
}

async fn optimize(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<OptimizeRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let s = session(&state, &id)?;
    let Json(req) = body?;
    let result = ops::optimize(&s.instance, &req.predictor, &req.spec)?;
    let status = match result.status {
        LpStatus::Optimal => StatusCode::OK,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    Ok((status, Json(result)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MergeRequest {
    z: String,
    q: String,
    #[serde(default)]
    per_group: bool,
}

#[derive(Serialize)]
struct MergeResponse {
    session: String,
    #[serde(flatten)]
    merged: ops::Merged,
}

async fn merge(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MergeRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<MergeResponse>)> {
    let s = session(&state, &id)?;
    let Json(req) = body?;
    let (instance, merged) = ops::merge(&s.instance, &req.z, &req.q, req.per_group)?;
    let created = state.insert(instance);
    Ok((
        StatusCode::CREATED,
        Json(MergeResponse {
            session: created.id.clone(),
            merged,
        }),
    ))
}

#[derive(Deserialize)]
struct CompareQuery {
    base: String,
    refined: String,
    spec: String,
}

async fn compare(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CompareQuery>,
) -> ApiResult<Json<infofair::optimize::ImprovementReport<f64>>> {
    let s = session(&state, &id)?;
    let spec: OptimizationSpec =
        serde_json::from_str(&q.spec).map_err(|e| ApiError::bad_request(format!("spec: {e}")))?;
    Ok(Json(ops::compare(&s.instance, &q.base, &q.refined, &spec)?))
}

async fn list_demos() -> Json<serde_json::Value> {
    Json(json!({"demos": DEMO_NAMES}))
}

async fn load_demo(
    State(state): State<AppState>,
    Path(name): Path<String>,
) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    let s = state.insert(demo_instance::<f64>(&name).map_err(|e| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown-demo", e.to_string())
    })?);
    Ok((StatusCode::CREATED, Json(summary(&s))))
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/population", get(get_population))
        .route("/sessions/{id}/audit", get(audit))
        .route("/sessions/{id}/curves", get(curves))
        .route("/sessions/{id}/optimize", post(optimize))
        .route("/sessions/{id}/merge", post(merge))
        .route("/sessions/{id}/compare", get(compare))
        .route("/demos", get(list_demos))
        .route("/demos/{name}", post(load_demo))
        .layer(cors)
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::default())).await
}
