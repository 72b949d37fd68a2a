//! HTTP API consumed by the operator console and the `ztc order` client.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::task::JoinHandle;

use ztc_core::catalogs::DeploymentFilter;
use ztc_core::engine::{EngineError, TeardownSummary, INFEASIBLE_REASON};
use ztc_core::metrics::{KpiReport, UsageSample};
use ztc_core::substrate::Antenna;
use ztc_core::{
    CloudTier, DeploymentId, Engine, GeoPosition, LifecycleState, Resources, ServiceOrder,
};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine: Arc::new(engine),
        }
    }
}

/// Error response: a status code and a `{"reason": ...}` body.
#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "reason": self.1 }))).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::InvalidOrder(_) => StatusCode::BAD_REQUEST,
            EngineError::UnknownDeployment(_) => StatusCode::NOT_FOUND,
            EngineError::WrongState { .. } => StatusCode::CONFLICT,
            EngineError::Catalog(ztc_core::catalogs::CatalogError::UnknownDeployment(_)) => {
                StatusCode::NOT_FOUND
            }
            EngineError::Catalog(ztc_core::catalogs::CatalogError::MidPipeline { .. }) => {
                StatusCode::CONFLICT
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, EngineError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/orders", axum::routing::post(submit_order))
        .route("/api/deployments", get(list_deployments))
        .route(
            "/api/deployments/:id",
            get(get_deployment).delete(delete_deployment),
        )
        .route("/api/nodes", get(list_nodes))
        .route("/api/nodes/:id", get(get_node))
        .route("/api/metrics", get(get_metrics))
        .route("/api/events", get(list_events))
        .with_state(state)
}

// ---- orders ----------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
pub struct SubmitParams {
    #[serde(default)]
    pub sync: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Accepted {
    pub deployment_id: DeploymentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifecycle: Option<LifecycleState>,
}

async fn submit_order(
    State(state): State<AppState>,
    Query(params): Query<SubmitParams>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Accepted>)> {
    let order: ServiceOrder = serde_json::from_slice(&body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("invalid order: {e}")))?;
    let engine = state.engine.clone();
    let id = blocking(move || engine.accept(order)).await?;

    let engine = state.engine.clone();
    if !params.sync {
        let run_id = id.clone();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = engine.execute(&run_id) {
                tracing::error!(deployment = %run_id, error = %e, "pipeline failed");
            }
        });
        return Ok((
            StatusCode::ACCEPTED,
            Json(Accepted {
                deployment_id: id,
                lifecycle: None,
            }),
        ));
    }

    let run_id = id.clone();
    let rec = blocking(move || engine.execute(&run_id)).await?;
    if rec.lifecycle == LifecycleState::Aborted {
        let reason = rec
            .abort_cause
            .unwrap_or_else(|| INFEASIBLE_REASON.to_string());
        return Err(ApiError(StatusCode::CONFLICT, reason));
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(Accepted {
            deployment_id: id,
            lifecycle: Some(rec.lifecycle),
        }),
    ))
}

// ---- deployments -------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
pub struct ListParams {
    pub tag: Option<String>,
    pub state: Option<LifecycleState>,
}

async fn list_deployments(
    State(state): State<AppState>,
    Query(params): Query<ListParams>,
) -> impl IntoResponse {
    Json(state.engine.list_deployments(&DeploymentFilter {
        tag: params.tag,
        state: params.state,
    }))
}

async fn get_deployment(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    let id = DeploymentId(id);
    state
        .engine
        .deployment(&id)
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown deployment {id}")))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Deleted {
    pub deployment_id: DeploymentId,
    /// Present when the deployment was Running and had to be torn down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teardown: Option<TeardownSummary>,
}

async fn delete_deployment(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Deleted>> {
    let id = DeploymentId(id);
    let engine = state.engine.clone();
    blocking(move || {
        let rec = engine
            .deployment(&id)
            .ok_or_else(|| EngineError::UnknownDeployment(id.clone()))?;
        let teardown = if rec.lifecycle == LifecycleState::Running {
            Some(engine.teardown(&id)?)
        } else {
            None
        };
        engine.delete_record(&id)?;
        Ok(Deleted {
            deployment_id: id,
            teardown,
        })
    })
    .await
    .map(Json)
}

// ---- nodes -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeView {
    pub node_id: String,
    pub tier: CloudTier,
    pub position: GeoPosition,
    pub capacity: Resources,
    pub used: Resources,
    pub free: Resources,
    pub antennas_total: usize,
    pub antennas_occupied: usize,
    pub antennas_available: usize,
    pub antennas: Vec<Antenna>,
}

fn node_views(engine: &Engine) -> Vec<NodeView> {
    engine
        .topology()
        .nodes
        .into_values()
        .map(|n| {
            let occupied = n.antennas.iter().filter(|a| !a.is_free()).count();
            NodeView {
                node_id: n.id.clone(),
                tier: n.tier,
                position: n.position,
                capacity: n.capacity,
                used: n.used,
                free: n.free(),
                antennas_total: n.antennas.len(),
                antennas_occupied: occupied,
                antennas_available: n.antennas.len() - occupied,
                antennas: n.antennas,
            }
        })
        .collect()
}

async fn list_nodes(State(state): State<AppState>) -> impl IntoResponse {
    Json(node_views(&state.engine))
}

async fn get_node(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<NodeView>> {
    node_views(&state.engine)
        .into_iter()
        .find(|n| n.node_id == id)
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown node {id}")))
}

// ---- metrics and events --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub kpis: Vec<KpiReport>,
    pub usage: Vec<UsageSample>,
}

async fn get_metrics(State(state): State<AppState>) -> impl IntoResponse {
    Json(Metrics {
        kpis: state.engine.kpi_reports(),
        usage: state.engine.usage_samples(),
    })
}

async fn list_events(
    State(state): State<AppState>,
    Query(params): Query<BTreeMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let since = match params.get("since") {
        None => 0,
        Some(raw) => {
            let n: i64 = raw.parse().map_err(|_| {
                ApiError(
                    StatusCode::BAD_REQUEST,
                    format!("since must be an integer, got {raw:?}"),
                )
            })?;
            u64::try_from(n).map_err(|_| {
                ApiError(
                    StatusCode::BAD_REQUEST,
                    format!("since must be >= 0, got {n}"),
                )
            })?
        }
    };
    Ok(Json(state.engine.events_since(since)))
}

// ---- background work -----------------------------------------------------------

/// Periodic catalog refresh and usage sampling. Abort the handles to stop.
pub fn spawn_background(
    engine: Arc<Engine>,
    refresh_every: Duration,
    sample_every: Duration,
) -> Vec<JoinHandle<()>> {
    let refresher = {
        let engine = engine.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(refresh_every);
            loop {
                tick.tick().await;
                let engine = engine.clone();
                let result = tokio::task::spawn_blocking(move || engine.refresh()).await;
                if let Ok(Err(e)) = result {
                    tracing::warn!(error = %e, "catalog refresh failed");
                }
            }
        })
    };
    let sampler = tokio::spawn(async move {
        let mut tick = tokio::time::interval(sample_every);
        loop {
            tick.tick().await;
            let engine = engine.clone();
            let _ = tokio::task::spawn_blocking(move || engine.sample_usage()).await;
        }
    });
    vec![refresher, sampler]
}
