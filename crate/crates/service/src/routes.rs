use std::future::Future;
use std::sync::Arc;
use std::time::{Duration, Instant};

use adstrength_core::analytics::UiEvent;
use adstrength_core::anonymize::anonymize;
use adstrength_core::corpus::OTHER_PUBLISHER;
use adstrength_core::textproc::{compose_ad_text, AdText};
use adstrength_core::tsi::tsi_score;
use adstrength_core::ProviderError;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::state::{AppState, Snapshot};

/// Upper bound on `k` for `/v1/similar`.
pub const MAX_K: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn timeout(what: &str, budget: Duration) -> Self {
        ApiError::new(StatusCode::GATEWAY_TIMEOUT, format!("{what} exceeded {} ms", budget.as_millis()))
    }
}

impl From<adstrength_core::Error> for ApiError {
    fn from(e: adstrength_core::Error) -> Self {
        use adstrength_core::Error as E;
        match e {
            E::Provider(ProviderError::Timeout(d)) | E::AdProvider { source: ProviderError::Timeout(d), .. } => {
                ApiError::timeout("provider call", d)
            }
            E::Provider(p) => ApiError::new(StatusCode::BAD_GATEWAY, p.to_string()),
            E::InvalidArgument(m) => ApiError::bad_request(m),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        ApiError::from(adstrength_core::Error::Provider(e))
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsiRequest {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub cta: String,
    #[serde(default)]
    pub publisher: Option<String>,
}

impl TsiRequest {
    pub fn text(&self) -> Result<AdText, ApiError> {
        if [&self.title, &self.description, &self.cta].iter().all(|s| s.trim().is_empty()) {
            return Err(ApiError::bad_request("title, description and cta are all empty"));
        }
        Ok(compose_ad_text(&self.title, &self.description, &self.cta))
    }

    pub fn publisher(&self) -> String {
        self.publisher
            .as_deref()
            .filter(|p| !p.trim().is_empty())
            .unwrap_or(OTHER_PUBLISHER)
            .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub ad_id: String,
    pub anonymized_text: String,
    pub pctr: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiResponse {
    pub pctr: f64,
    pub tsi: u8,
    pub suggestions: Vec<Suggestion>,
    pub neighbors_considered: usize,
    pub median_above: Option<f64>,
    pub index_generation: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctrResponse {
    pub pctr: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarRequest {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub cta: String,
    pub k: Option<usize>,
    pub min_sim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarNeighbor {
    pub ad_id: String,
    pub text: String,
    pub similarity: f64,
    pub pctr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarResponse {
    pub neighbors: Vec<SimilarNeighbor>,
    pub index_generation: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub ready: bool,
    pub pool_size: usize,
    pub index_digest: Option<String>,
    pub index_generation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebuildResponse {
    pub index_generation: u64,
    pub pool_size: usize,
    pub index_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsResponse {
    pub appended: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EventBatch {
    One(Box<UiEvent>),
    Many(Vec<UiEvent>),
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn ready(state: &AppState) -> Result<Arc<Snapshot>, ApiError> {
    state
        .snapshot()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "index not ready"))
}

/// Runs blocking provider work on the blocking pool under `budget`.
async fn budgeted<T, F>(what: &'static str, budget: Duration, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::time::timeout(budget, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(r)) => r,
        Ok(Err(join)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, join.to_string())),
        Err(_) => Err(ApiError::timeout(what, budget)),
    }
}

async fn total<T>(state: &AppState, fut: impl Future<Output = Result<T, ApiError>>) -> Result<T, ApiError> {
    let budget = state.budgets.total();
    tokio::time::timeout(budget, fut)
        .await
        .unwrap_or_else(|_| Err(ApiError::timeout("request", budget)))
}

async fn tsi(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<TsiResponse> {
    let start = Instant::now();
    let req: TsiRequest = parse_body(&body)?;
    let text = req.text()?;
    let publisher = req.publisher();
    let snap = ready(&state)?;
    let resp = total(&state, async {
        let (pctr, (t1, p1)) = (snap.pctr.clone(), (text.clone(), publisher));
        let predict = budgeted("pctr", state.budgets.pctr(), move || Ok(pctr.predict(&t1, &p1)?));
        let (s2, t2, cfg) = (snap.clone(), text.clone(), state.tsi.clone());
        let retrieve = budgeted("retrieval", state.budgets.retrieval(), move || {
            let q = s2.embedder.embed(&t2)?;
            Ok(s2.index.query_approx(&q, cfg.k, cfg.min_sim, None)?)
        });
        let (input_pctr, neighbors) = tokio::try_join!(predict, retrieve)?;
        let result = tsi_score(input_pctr, neighbors, &state.tsi)?;
        let suggestions = result
            .suggestions
            .iter()
            .map(|n| Suggestion {
                ad_id: n.ad_id.clone(),
                anonymized_text: anonymize(&AdText::new(&n.text), &state.blocklist).into_string(),
                pctr: n.pctr,
                similarity: n.similarity,
            })
            .collect();
        Ok(TsiResponse {
            pctr: result.input_pctr,
            tsi: result.tsi,
            suggestions,
            neighbors_considered: result.neighbors.len(),
            median_above: result.median_above,
            index_generation: snap.generation,
            latency_ms: 0.0,
        })
    })
    .await?;
    Ok(Json(TsiResponse {
        latency_ms: ms(start),
        ..resp
    }))
}

async fn pctr(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<PctrResponse> {
    let start = Instant::now();
    let req: TsiRequest = parse_body(&body)?;
    let text = req.text()?;
    let publisher = req.publisher();
    let provider = state.pctr();
    let budget = state.budgets.pctr();
    let pctr = total(&state, budgeted("pctr", budget, move || Ok(provider.predict(&text, &publisher)?))).await?;
    Ok(Json(PctrResponse {
        pctr,
        latency_ms: ms(start),
    }))
}

async fn similar(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<SimilarResponse> {
    let start = Instant::now();
    let req: SimilarRequest = parse_body(&body)?;
    let text = TsiRequest {
        title: req.title,
        description: req.description,
        cta: req.cta,
        publisher: None,
    }
    .text()?;
    let k = req.k.unwrap_or(state.tsi.k);
    if !(1..=MAX_K).contains(&k) {
        return Err(ApiError::bad_request(format!("k must be in [1, {MAX_K}]")));
    }
    let min_sim = req.min_sim.unwrap_or(state.tsi.min_sim);
    if !(-1.0..=1.0).contains(&min_sim) {
        return Err(ApiError::bad_request("min_sim must be in [-1, 1]"));
    }
    let snap = ready(&state)?;
    let s = snap.clone();
    let hits = total(
        &state,
        budgeted("retrieval", state.budgets.retrieval(), move || {
            let q = s.embedder.embed(&text)?;
            Ok(s.index.query_approx(&q, k, min_sim, None)?)
        }),
    )
    .await?;
    Ok(Json(SimilarResponse {
        neighbors: hits
            .into_iter()
            .map(|n| SimilarNeighbor {
                ad_id: n.ad_id,
                text: n.text,
                similarity: n.similarity,
                pctr: n.pctr,
            })
            .collect(),
        index_generation: snap.generation,
        latency_ms: ms(start),
    }))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(match state.snapshot() {
        Some(s) => Health {
            ready: true,
            pool_size: s.index.len(),
            index_digest: Some(s.index.digest().to_string()),
            index_generation: Some(s.generation),
        },
        None => Health {
            ready: false,
            pool_size: 0,
            index_digest: None,
            index_generation: None,
        },
    })
}

async fn rebuild(State(state): State<Arc<AppState>>) -> ApiResult<RebuildResponse> {
    if state.config.pool_path.is_none() {
        return Err(ApiError::bad_request("no pool_path configured"));
    }
    let _guard = state.rebuild_guard().await;
    let s = state.clone();
    let snap = tokio::task::spawn_blocking(move || s.rebuild_blocking())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| {
            log::error!("rebuild failed, previous index keeps serving: {e}");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("rebuild failed: {e}"))
        })?;
    Ok(Json(RebuildResponse {
        index_generation: snap.generation,
        pool_size: snap.index.len(),
        index_digest: snap.index.digest().to_string(),
    }))
}

async fn events(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<EventsResponse> {
    let batch: EventBatch = parse_body(&body)?;
    let events = match batch {
        EventBatch::One(e) => vec![*e],
        EventBatch::Many(v) => v,
    };
    let s = state.clone();
    let appended = tokio::task::spawn_blocking(move || s.append_events(&events))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| match e {
            crate::Error::Core(adstrength_core::Error::Io(io)) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, io.to_string())
            }
            crate::Error::Io(io) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, io.to_string()),
            other => ApiError::bad_request(other.to_string()),
        })?;
    Ok(Json(EventsResponse { appended }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/tsi", post(tsi))
        .route("/v1/pctr", post(pctr))
        .route("/v1/similar", post(similar))
        .route("/v1/index/rebuild", post(rebuild))
        .route("/v1/healthz", get(healthz))
        .route("/v1/events", post(events))
        .with_state(state)
}
