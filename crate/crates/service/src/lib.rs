//! HTTP/JSON what-if service: upload ballot files, run allocation rules under
//! scenario overrides, fetch per-agent receipts and sweep one parameter.
//!
//! Endpoints:
//!
//! - `POST /instances` multipart with parts `pb`, optional `groups` and
//!   optional `config` (JSON); answers with the content-hash id.
//! - `GET /instances/{id}`
//! - `GET /instances/{id}/allocation?rule=&budget=&split_r=&weights=`
//! - `GET /instances/{id}/receipts/{agent}` (same scenario parameters)
//! - `GET /instances/{id}/sweep?param=split_r|total_budget&from=&to=&steps=`

mod error;
mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use kes_core::analysis::{portfolio_alignment, portfolio_stats, receipts_for_agent, score_table};
use kes_core::ingest::parse_weight_list;
use kes_core::model::WeightValue;
use kes_core::money::{format_rational, parse_rational};
use kes_core::wire::{
    AllocationResponse, InstanceSummary, Namespace, ReceiptResponse, SweepParam, SweepPoint, SweepResponse,
    UploadConfig,
};
use kes_core::{Money, Overrides, Rational, Rule};
use serde::Deserialize;
use tower_http::cors::{Any, CorsLayer};

pub use error::ApiError;
pub use store::{Canonical, Store, Stored};

/// Upload size cap.
pub const DEFAULT_BODY_LIMIT: usize = 16 * 1024 * 1024;
/// Environment variable overriding the listening port.
pub const PORT_ENV: &str = "KES_PORT";
pub const DEFAULT_PORT: u16 = 8080;
pub const MAX_SWEEP_STEPS: usize = 201;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Write-through directory; uploads are stored here and reloaded on start.
    pub fixtures_dir: Option<PathBuf>,
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { fixtures_dir: None, body_limit: DEFAULT_BODY_LIMIT }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    body_limit: usize,
}

impl AppState {
    /// Builds the state, reloading any instances kept in the fixtures directory.
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        let store = Store::new(config.fixtures_dir.clone());
        if let Some(dir) = &config.fixtures_dir {
            for stored in store::read_fixtures(dir)? {
                store.insert(stored);
            }
            tracing::info!(count = store.len(), dir = %dir.display(), "reloaded fixtures");
        }
        Ok(AppState { store: Arc::new(store), body_limit: config.body_limit })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

/// Port from `KES_PORT`, falling back to `default`.
pub fn port_from_env(default: u16) -> u16 {
    std::env::var(PORT_ENV).ok().and_then(|p| p.parse().ok()).unwrap_or(default)
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET, Method::POST]).allow_headers(Any);
    let limit = state.body_limit;
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/instances", post(upload))
        .route("/instances/{id}", get(summary))
        .route("/instances/{id}/allocation", get(allocation))
        .route("/instances/{id}/receipts/{agent}", get(receipts))
        .route("/instances/{id}/sweep", get(sweep))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn upload(State(state): State<AppState>, mut multipart: Multipart) -> Result<Json<InstanceSummary>, ApiError> {
    let (mut pb, mut groups, mut config) = (None, None, UploadConfig::default());
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(multipart_error)?;
        match name.as_str() {
            "pb" => pb = Some(bytes),
            "groups" => groups = Some(bytes),
            "config" => {
                config = serde_json::from_slice(&bytes)
                    .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidConfig", e.to_string()))?;
            }
            other => return Err(ApiError::bad_request(format!("unexpected multipart part `{other}`"))),
        }
    }
    let pb = pb.ok_or_else(|| ApiError::bad_request("missing multipart part `pb`"))?;

    let (stored, canonical) = tokio::task::spawn_blocking(move || Stored::build(&pb, groups.as_deref(), &config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    let fresh = state.store.get(&stored.id).is_none();
    let stored = state.store.insert(stored);
    if fresh {
        if let Some(dir) = state.store.fixtures_dir().map(|d| d.to_path_buf()) {
            let id = stored.id.clone();
            let written = tokio::task::spawn_blocking(move || store::write_fixture(&dir, &id, &canonical)).await;
            if let Ok(Err(e)) | Err(e) = written.map_err(std::io::Error::other) {
                tracing::warn!(error = %e, "could not write fixture");
            }
        }
        if stored.frozen {
            stored.scenario(Rule::Kes, &Overrides::default()).await?;
        }
        tracing::info!(id = %stored.id, "stored instance");
    }
    Ok(Json(stored.summary.clone()))
}

fn multipart_error(err: axum::extract::multipart::MultipartError) -> ApiError {
    let status = err.status();
    let kind = if status == StatusCode::PAYLOAD_TOO_LARGE { "PayloadTooLarge" } else { "BadMultipart" };
    ApiError::new(status, kind, err.body_text())
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Stored>, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::not_found("UnknownInstance", format!("no instance `{id}`")))
}

async fn summary(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<InstanceSummary>, ApiError> {
    Ok(Json(lookup(&state, &id)?.summary.clone()))
}

/// Scenario parameters shared by allocation, receipts and sweep queries.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ScenarioQuery {
    pub rule: Option<String>,
    pub budget: Option<String>,
    pub split_r: Option<String>,
    /// `field:weight,...`; entries replace the stored weights of those fields.
    pub weights: Option<String>,
}

impl ScenarioQuery {
    pub fn parse(&self) -> Result<(Rule, Overrides), ApiError> {
        let rule = match &self.rule {
            Some(text) => text.parse::<Rule>().map_err(|e| ApiError::invalid("UnknownRule", e.to_string()))?,
            None => Rule::Kes,
        };
        let mut overrides = Overrides::default();
        if let Some(text) = &self.budget {
            let budget = Money::parse_decimal(text).map_err(|e| ApiError::invalid("InvalidBudget", format!("budget: {e}")))?;
            overrides.total_budget = Some(budget);
        }
        if let Some(text) = &self.split_r {
            let r = parse_rational(text).map_err(|e| ApiError::invalid("InvalidSplit", format!("split_r: {e}")))?;
            overrides.split_r = Some(r);
        }
        if let Some(text) = &self.weights {
            let weights = parse_weight_list(text).map_err(|e| ApiError::invalid("InvalidWeights", e))?;
            overrides.field_weights = Some(weights.into_iter().map(|(k, v)| (k, WeightValue(v))).collect());
        }
        Ok((rule, overrides))
    }
}

fn namespace(rule: Rule, overrides: &Overrides) -> Namespace {
    if rule == Rule::Kes && overrides.is_empty() {
        Namespace::Official
    } else {
        Namespace::Scenario
    }
}

async fn allocation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<ScenarioQuery>,
) -> Result<Json<AllocationResponse>, ApiError> {
    let stored = lookup(&state, &id)?;
    let (rule, overrides) = query.parse()?;
    let computed = stored.scenario(rule, &overrides).await?;
    let (instance, result) = (&computed.instance, &computed.result);
    Ok(Json(AllocationResponse {
        instance: stored.id.clone(),
        namespace: namespace(rule, &overrides),
        rule,
        config: instance.config().clone(),
        scores: score_table(instance, result),
        stats: portfolio_stats(result, instance),
        alignment: portfolio_alignment(instance, result),
        result: result.clone(),
    }))
}

async fn receipts(
    State(state): State<AppState>,
    Path((id, agent)): Path<(String, String)>,
    Query(query): Query<ScenarioQuery>,
) -> Result<Json<ReceiptResponse>, ApiError> {
    let stored = lookup(&state, &id)?;
    let (rule, overrides) = query.parse()?;
    let computed = stored.scenario(rule, &overrides).await?;
    let receipt = receipts_for_agent(&computed.instance, &computed.result, &agent)
        .map_err(|e| ApiError::not_found("UnknownAgent", e.to_string()))?;
    Ok(Json(ReceiptResponse { instance: stored.id.clone(), namespace: namespace(rule, &overrides), rule, receipt }))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SweepQuery {
    pub param: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub steps: Option<String>,
    #[serde(flatten)]
    pub scenario: ScenarioQuery,
}

/// Evenly spaced values from `from` to `to`; budgets are rounded to cents.
pub fn sweep_values(param: SweepParam, from: &str, to: &str, steps: usize) -> Result<Vec<String>, ApiError> {
    let bad = |what: &str, e: &dyn std::fmt::Display| ApiError::invalid("InvalidRange", format!("{what}: {e}"));
    let (lo, hi) = match param {
        SweepParam::SplitR => (
            parse_rational(from).map_err(|e| bad("from", &e))?,
            parse_rational(to).map_err(|e| bad("to", &e))?,
        ),
        SweepParam::TotalBudget => (
            Money::parse_decimal(from).map_err(|e| bad("from", &e))?.to_rational(),
            Money::parse_decimal(to).map_err(|e| bad("to", &e))?.to_rational(),
        ),
    };
    if !(1..=MAX_SWEEP_STEPS).contains(&steps) {
        return Err(ApiError::invalid("InvalidRange", format!("steps must lie in 1..={MAX_SWEEP_STEPS}, got {steps}")));
    }
    if lo > hi {
        return Err(ApiError::invalid("InvalidRange", "from must not exceed to"));
    }
    let span = &hi - &lo;
    Ok((0..steps)
        .map(|k| {
            let v = if steps == 1 {
                lo.clone()
            } else {
                &lo + &span * Rational::new((k as i64).into(), ((steps - 1) as i64).into())
            };
            match param {
                SweepParam::SplitR => format_rational(&v),
                SweepParam::TotalBudget => Money::round_half_even(&v).to_string(),
            }
        })
        .collect())
}

async fn sweep(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<SweepQuery>,
) -> Result<Json<SweepResponse>, ApiError> {
    let stored = lookup(&state, &id)?;
    let param = match query.param.as_deref() {
        Some("split_r") => SweepParam::SplitR,
        Some("total_budget") | Some("budget") => SweepParam::TotalBudget,
        other => {
            return Err(ApiError::invalid(
                "InvalidParam",
                format!("param must be split_r or total_budget, got `{}`", other.unwrap_or_default()),
            ))
        }
    };
    let missing = |what: &str| ApiError::invalid("InvalidRange", format!("missing `{what}`"));
    let from = query.from.as_deref().ok_or_else(|| missing("from"))?;
    let to = query.to.as_deref().ok_or_else(|| missing("to"))?;
    let steps: usize = query
        .steps
        .as_deref()
        .ok_or_else(|| missing("steps"))?
        .parse()
        .map_err(|_| ApiError::invalid("InvalidRange", "steps must be a non-negative integer"))?;
    let values = sweep_values(param, from, to, steps)?;

    let mut points = Vec::with_capacity(values.len());
    let mut rule = Rule::Kes;
    for value in values {
        let mut scenario = query.scenario.clone();
        match param {
            SweepParam::SplitR => scenario.split_r = Some(value.clone()),
            SweepParam::TotalBudget => scenario.budget = Some(value.clone()),
        }
        let (r, overrides) = scenario.parse()?;
        rule = r;
        let computed = stored.scenario(r, &overrides).await?;
        points.push(SweepPoint {
            value,
            stats: portfolio_stats(&computed.result, &computed.instance),
            funded: computed.result.funded.clone(),
        });
    }
    Ok(Json(SweepResponse { instance: stored.id.clone(), rule, param, points }))
}
