//! JSON-over-HTTP facade over the index computation.
//!
//! Model and dataset are loaded once and never mutated; every request is a
//! pure function of them. Response bodies are canonical JSON, so a compute
//! response is byte-identical to `aivi compute` output for the same scenario.

use std::future::Future;
use std::io;
use std::sync::{Arc, OnceLock};

use aivi_core::compute::resolve_bounds;
use aivi_core::coverage::CoverageReport;
use aivi_core::model::BoundsSpec;
use aivi_core::{
    evaluate, from_json, monte_carlo, prepare, to_canonical_json, tornado, validate_dataset,
    ClampPolicy, ComponentKind, ComputeResult, Dataset, Error, IndexModel, Layer, MissingPolicy,
    NormalizationBounds, Period, Scenario, SensitivityReport, TornadoEntry,
};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const DEFAULT_SAMPLE_CAP: u64 = 100_000;
pub const DEFAULT_CONCENTRATION: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Largest `samples` a sensitivity request may ask for.
    pub sample_cap: u64,
    /// Allowed browser origins; `None` allows any.
    pub cors_origins: Option<Vec<String>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            sample_cap: DEFAULT_SAMPLE_CAP,
            cors_origins: None,
        }
    }
}

struct Loaded {
    model: IndexModel,
    dataset: Dataset,
    summary: String,
}

/// Shared, read-only service state. Requests get 503 until [`AppState::load`]
/// has run.
pub struct AppState {
    config: ServiceConfig,
    loaded: OnceLock<Loaded>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            config,
            loaded: OnceLock::new(),
        })
    }

    /// State with model and data already loaded.
    pub fn ready(config: ServiceConfig, model: IndexModel, dataset: Dataset) -> Arc<Self> {
        let state = Self::new(config);
        state.load(model, dataset).expect("fresh state");
        state
    }

    /// Install model and data. Fails if they were already installed.
    pub fn load(&self, model: IndexModel, dataset: Dataset) -> Result<(), &'static str> {
        let summary = to_canonical_json(&ModelSummary::new(&model, &dataset));
        self.loaded
            .set(Loaded {
                model,
                dataset,
                summary,
            })
            .map_err(|_| "model and data are already loaded")
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub id: String,
    pub indicator_id: String,
    pub kind: ComponentKind,
    pub weight: f64,
    /// Bounds as written in the model: an object, or `"empirical"`.
    pub bounds: BoundsSpec<f64>,
    /// Bounds in effect for this dataset, when they can be resolved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_bounds: Option<NormalizationBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubIndexSummary {
    pub id: String,
    pub weight: f64,
    pub components: Vec<ComponentSummary>,
}

/// Everything a client needs to build a scenario editor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub version: u32,
    pub clamp_policy: ClampPolicy,
    pub missing_policy: MissingPolicy,
    pub sub_indexes: Vec<SubIndexSummary>,
    pub periods: Vec<Period>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latest_period: Option<Period>,
    pub coverage: CoverageReport,
}

impl ModelSummary {
    pub fn new(model: &IndexModel, dataset: &Dataset) -> Self {
        let sub_indexes = model
            .sub_indexes()
            .iter()
            .map(|sub| SubIndexSummary {
                id: sub.id.clone(),
                weight: model.top_weights().get(&sub.id).expect("validated model"),
                components: sub
                    .components()
                    .iter()
                    .map(|c| ComponentSummary {
                        id: c.id.clone(),
                        indicator_id: c.indicator_id.clone(),
                        kind: c.kind,
                        weight: c.weight,
                        bounds: c.bounds,
                        resolved_bounds: resolve_bounds(c, dataset).ok(),
                    })
                    .collect(),
            })
            .collect();
        ModelSummary {
            version: model.version,
            clamp_policy: model.clamp_policy,
            missing_policy: model.missing_policy,
            sub_indexes,
            periods: dataset.periods().into_iter().collect(),
            latest_period: dataset.latest_period(),
            coverage: validate_dataset(model, dataset),
        }
    }
}

/// Body of `POST /api/v1/sensitivity`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub layer: Layer,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub concentration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityResponse {
    pub report: SensitivityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tornado: Option<Vec<TornadoEntry>>,
}

/// Evaluate a scenario. Shared by the HTTP handler and the CLI.
pub fn compute(
    model: &IndexModel,
    dataset: &Dataset,
    scenario: &Scenario,
) -> Result<ComputeResult, Error> {
    evaluate(model, dataset, scenario)
}

/// Run a sensitivity request. Shared by the HTTP handler and the CLI.
pub fn sensitivity(
    model: &IndexModel,
    dataset: &Dataset,
    request: &SensitivityRequest,
    sample_cap: u64,
) -> Result<SensitivityResponse, Error> {
    if request.samples == 0 || request.samples > sample_cap {
        return Err(Error::InvalidSampleCount {
            count: request.samples,
            cap: sample_cap,
        }
        .at("samples"));
    }
    let concentration = request.concentration.unwrap_or(DEFAULT_CONCENTRATION);
    let (model, values) = prepare(model, dataset, &request.scenario).map_err(|e| {
        if e.path().is_some() {
            e.at("scenario")
        } else {
            e
        }
    })?;
    let report = monte_carlo(
        &model,
        &values,
        request.layer,
        request.samples,
        request.seed,
        concentration,
    )
    .map_err(|e| match e {
        Error::InvalidConcentration(_) => e.at("concentration"),
        e => e,
    })?;
    let tornado = match request.delta {
        Some(d) => Some(tornado(&model, &values, d).map_err(|e| match e {
            Error::DeltaOutOfRange(_) => e.at("delta"),
            e => e,
        })?),
        None => None,
    };
    Ok(SensitivityResponse { report, tornado })
}

/// Request-shaped errors are the caller's fault (400); the rest mean the
/// scenario is well formed but cannot be computed from this data (422).
pub fn status_for(err: &Error) -> StatusCode {
    let request_field = err.path().is_some_and(|p| {
        let p = p.strip_prefix("scenario.").unwrap_or(p);
        [
            "weight_overrides",
            "component_overrides",
            "samples",
            "delta",
            "concentration",
        ]
        .iter()
        .any(|f| p.starts_with(f))
    });
    let request_kind = matches!(
        err.root(),
        Error::Syntax(_)
            | Error::SchemaViolation { .. }
            | Error::UnknownId(_)
            | Error::NegativeWeight { .. }
            | Error::WeightSumViolation { .. }
            | Error::EmptyWeights
            | Error::NotUnitInterval(_)
            | Error::NonFiniteInput(_)
            | Error::InvalidPeriod(_)
            | Error::InvalidSampleCount { .. }
            | Error::DeltaOutOfRange(_)
            | Error::InvalidConcentration(_)
    );
    if request_field || request_kind {
        StatusCode::BAD_REQUEST
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<&'a str>,
}

/// The `{"error": {...}}` body used for every failure.
pub fn error_json(code: &str, message: String, path: Option<&str>) -> String {
    to_canonical_json(&ErrorBody {
        error: ErrorDetail {
            code,
            message,
            path,
        },
    })
}

fn json_response(status: StatusCode, body: String) -> Response {
    (
        status,
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/json"),
        )],
        body,
    )
        .into_response()
}

fn error_response(err: &Error) -> Response {
    let status = status_for(err);
    tracing::debug!(%status, error = %err, "request failed");
    json_response(
        status,
        error_json(err.code(), err.root().to_string(), err.path()),
    )
}

fn not_ready() -> Response {
    let mut r = json_response(
        StatusCode::SERVICE_UNAVAILABLE,
        error_json("NotReady", "model and data are still loading".into(), None),
    );
    r.headers_mut()
        .insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
    r
}

fn parse_body<D: serde::de::DeserializeOwned>(body: &Bytes) -> Result<D, Error> {
    let text = std::str::from_utf8(body).map_err(|e| Error::Syntax(e.to_string()))?;
    // an empty body means "all defaults"
    let text = if text.trim().is_empty() { "{}" } else { text };
    from_json(text)
}

async fn health() -> Response {
    json_response(
        StatusCode::OK,
        to_canonical_json(&serde_json::json!({"status": "ok"})),
    )
}

async fn model_summary(State(state): State<Arc<AppState>>) -> Response {
    match state.loaded.get() {
        Some(l) => json_response(StatusCode::OK, l.summary.clone()),
        None => not_ready(),
    }
}

async fn compute_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(l) = state.loaded.get() else {
        return not_ready();
    };
    let result = parse_body::<Scenario>(&body).and_then(|s| compute(&l.model, &l.dataset, &s));
    match result {
        Ok(r) => json_response(StatusCode::OK, to_canonical_json(&r)),
        Err(e) => error_response(&e),
    }
}

async fn sensitivity_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    if state.loaded.get().is_none() {
        return not_ready();
    }
    let request = match parse_body::<SensitivityRequest>(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    let worker = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let l = worker.loaded.get().expect("checked above");
        sensitivity(&l.model, &l.dataset, &request, worker.config.sample_cap)
    })
    .await;
    match result {
        Ok(Ok(r)) => json_response(StatusCode::OK, to_canonical_json(&r)),
        Ok(Err(e)) => error_response(&e),
        Err(join) => {
            tracing::error!(error = %join, "sensitivity worker failed");
            json_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                error_json("Internal", "sensitivity worker failed".into(), None),
            )
        }
    }
}

fn cors(config: &ServiceConfig) -> CorsLayer {
    let origin = match &config.cors_origins {
        None => AllowOrigin::any(),
        Some(list) => AllowOrigin::list(
            list.iter()
                .filter_map(|o| HeaderValue::from_str(o).ok())
                .collect::<Vec<_>>(),
        ),
    };
    CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::HEAD, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = cors(&state.config);
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/model", get(model_summary))
        .route("/api/v1/compute", post(compute_handler))
        .route("/api/v1/sensitivity", post(sensitivity_handler))
        .layer(cors)
        .with_state(state)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "listening");
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C.
pub async fn ctrl_c() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::warn!(error = %e, "cannot listen for Ctrl-C");
        std::future::pending::<()>().await;
    }
}
