//! HTTP session service: upload an image, paint seeds, launch runs and poll
//! the evolving contour.

pub mod session;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use uuid::Uuid;

use seedseg_core::edgemap::build_edge_map;
use seedseg_core::engine::{Segmentation, SegmentationParams};
use seedseg_core::error::Error as CoreError;
use seedseg_core::ingest::{decode_seed_mask, image_grid, image_to_field, rasterize_strokes, Image, Sampling, Stroke};

use session::{RunConflict, Session};

#[derive(Debug, Clone)]
pub struct Config {
    pub max_body_bytes: usize,
    pub ring_capacity: usize,
    pub ttl: Duration,
    /// Allowed CORS origins; empty allows any.
    pub allowed_origins: Vec<HeaderValue>,
}

impl Default for Config {
    fn default() -> Self {
        Self { max_body_bytes: 16 << 20, ring_capacity: 32, ttl: Duration::from_secs(3600), allowed_origins: vec![] }
    }
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<Config>,
    sessions: Arc<RwLock<HashMap<Uuid, Arc<Session>>>>,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default() }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn session(&self, id: Uuid) -> Option<Arc<Session>> {
        let s = self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(&id).cloned();
        if let Some(s) = &s {
            s.touch();
        }
        s
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    fn insert(&self, s: Arc<Session>) {
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(s.id, s);
    }

    fn remove(&self, id: Uuid) -> bool {
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).remove(&id).is_some()
    }

    /// Drops sessions untouched for longer than the TTL as of `now`. Sessions
    /// with an active run are kept.
    pub fn evict_expired(&self, now: Instant) -> usize {
        let ttl = self.config.ttl;
        let mut map = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        let before = map.len();
        map.retain(|_, s| s.is_active() || now.saturating_duration_since(s.last_access()) <= ttl);
        before - map.len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(id: Uuid) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }

    fn conflict() -> Self {
        Self::new(StatusCode::CONFLICT, "a run is active on this session")
    }

    /// Undecodable input is a bad request; decodable but unacceptable input is 422.
    fn from_core(e: CoreError) -> Self {
        let status = match e {
            CoreError::Ingest { .. } | CoreError::Decode(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }

    fn from_json(e: serde_json::Error) -> Self {
        let status = if e.is_data() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
        Self::new(status, e.to_string())
    }
}

impl From<RunConflict> for ApiError {
    fn from(_: RunConflict) -> Self {
        Self::conflict()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let origins = if state.config.allowed_origins.is_empty() {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(state.config.allowed_origins.clone())
    };
    let cors = CorsLayer::new().allow_origin(origins).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/seeds", put(put_seeds))
        .route("/sessions/{id}/run", post(start_run))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/snapshots", get(get_snapshots))
        .layer(DefaultBodyLimit::max(state.config.max_body_bytes))
        .layer(cors)
        .with_state(state)
}

/// Serves until the listener fails, evicting expired sessions once a minute.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.evict_expired(Instant::now());
            if n > 0 {
                log::info!("evicted {n} expired sessions");
            }
        }
    });
    axum::serve(listener, router(state)).await
}

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("no session {raw}")))
}

fn lookup(state: &AppState, raw: &str) -> ApiResult<Arc<Session>> {
    let id = parse_id(raw)?;
    state.session(id).ok_or_else(|| ApiError::not_found(id))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    if body.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty body"));
    }
    let ring = state.config.ring_capacity;
    let session = tokio::task::spawn_blocking(move || -> Result<Session, CoreError> {
        let img = Image::decode_any(&body)?;
        let spec = image_grid(&img)?;
        let field = image_to_field(&img, spec, Sampling::Nearest)?;
        let params = SegmentationParams::default();
        let em = build_edge_map(&field, &params.mollifier(&spec), &params.edge_stop())?;
        Ok(Session::new(field, img.width(), img.height(), &em, ring))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| match e {
        CoreError::Param(_) | CoreError::Grid(_) | CoreError::Shape(_) => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
        e => ApiError::from_core(e),
    })?;
    let body = json!({ "id": session.id, "width": session.width, "height": session.height });
    log::info!("session {} created ({}x{})", session.id, session.width, session.height);
    state.insert(Arc::new(session));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<StatusCode> {
    let id = parse_id(&raw)?;
    if state.remove(id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(id))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StrokeBody {
    List(Vec<Stroke>),
    Wrapped { strokes: Vec<Stroke> },
}

fn is_png(headers: &HeaderMap, body: &[u8]) -> bool {
    let declared = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    declared.starts_with("image/png") || body.starts_with(b"\x89PNG")
}

async fn put_seeds(State(state): State<AppState>, Path(raw): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult<StatusCode> {
    let session = lookup(&state, &raw)?;
    if session.is_active() {
        return Err(ApiError::conflict());
    }
    let spec = session.spec();
    let mask = if is_png(&headers, &body) {
        decode_seed_mask(&body, spec).map_err(ApiError::from_core)?
    } else {
        let strokes = match serde_json::from_slice(&body).map_err(ApiError::from_json)? {
            StrokeBody::List(s) | StrokeBody::Wrapped { strokes: s } => s,
        };
        rasterize_strokes(&strokes, spec).map_err(ApiError::from_core)?
    };
    session.set_mask(mask)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn start_run(State(state): State<AppState>, Path(raw): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = lookup(&state, &raw)?;
    let params: SegmentationParams = if body.iter().all(u8::is_ascii_whitespace) {
        SegmentationParams::default()
    } else {
        serde_json::from_slice(&body).map_err(ApiError::from_json)?
    };
    params.validate(&session.spec()).map_err(ApiError::from_core)?;

    let (run_id, prev) = session.begin_run()?;
    let setup = {
        let s = session.clone();
        tokio::task::spawn_blocking(move || Segmentation::new(&s.image, &s.mask(), params)).await
    };
    let seg = match setup {
        Ok(Ok(seg)) => seg,
        Ok(Err(e)) => {
            session.abort_start(run_id, prev);
            return Err(ApiError::from_core(e));
        }
        Err(e) => {
            session.abort_start(run_id, prev);
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()));
        }
    };
    session.set_g0(seg.edge_map());

    let worker = session.clone();
    tokio::task::spawn_blocking(move || {
        let result = seg.run(|snap| worker.publish(snap));
        match &result {
            Ok(out) => {
                log::info!("run {run_id} finished after {} steps ({:?})", out.history.len(), out.stop);
                worker.finish(run_id, Ok(out));
            }
            Err(f) => {
                log::warn!("run {run_id} failed: {f}");
                worker.publish(&f.last);
                worker.finish(run_id, Err(f.to_string()));
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "runId": run_id }))).into_response())
}

async fn get_state(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<Json<session::StateView>> {
    Ok(Json(lookup(&state, &raw)?.view()))
}

async fn get_snapshots(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<Response> {
    let snaps = lookup(&state, &raw)?.snapshots();
    let list: Vec<&session::LiveState> = snaps.iter().map(|s| s.as_ref()).collect();
    Ok(Json(list).into_response())
}
