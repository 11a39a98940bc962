//! HTTP API over the agent runtime.
//!
//! Every mutation is a message to the Editor and every computation a message
//! to the Arguer; read-only listings come straight from catalog snapshots.
//! Bodies use the pack-file entry schema in JSON. Failures are JSON
//! [`ApiError`] objects with a machine-readable `code`.
//!
//! | route | success |
//! |---|---|
//! | `POST /indices` | 201 |
//! | `PUT /indices/{id}/values` | 204 |
//! | `POST /models`, `POST /indicators` | 201 |
//! | `PUT /models/{id}`, `PUT /indicators/{id}` | 200 |
//! | `GET /services?tier=` | 200 |
//! | `GET /indicators/{id}?period=&mode=` | 200 |
//! | `POST /reports` | 200 |
//! | `GET /indicators/{id}/series?from=&to=&mode=histogram` | 200 |
//! | `GET /anomalies?category=` | 200 |
//! | `POST /packs` | 207 |
//! | `GET /packs/export` | 200 |

mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::str::FromStr;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use decisio_core::agents::{Category, DefinitionEntry, Runtime};
use decisio_core::domains::{IndicatorEntry, ModelEntry, Pack, Section};
use decisio_core::registry::{IndexDefinition, IndexValue, PeriodKey, TierFilter};
use decisio_core::viz::Mode;

pub use error::{ApiError, ErrorCode};

type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

pub fn router(runtime: Runtime) -> Router {
    Router::new()
        .route("/indices", post(post_index))
        .route("/indices/{id}/values", put(put_value))
        .route("/models", post(post_model))
        .route("/models/{id}", put(put_model))
        .route("/indicators", post(post_indicator))
        .route("/indicators/{id}", put(put_indicator).get(get_indicator))
        .route("/indicators/{id}/series", get(get_series))
        .route("/services", get(get_services))
        .route("/reports", post(post_reports))
        .route("/anomalies", get(get_anomalies))
        .route("/packs", post(post_pack))
        .route("/packs/export", get(export_pack))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(runtime)
}

/// Bind `addr` and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, runtime: Runtime) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(runtime)).await
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
}

fn params(q: Params) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m)
        .map_err(|e| ApiError::bad_request(format!("invalid query: {e}")))
}

fn required<T: FromStr>(q: &HashMap<String, String>, key: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    let raw = q
        .get(key)
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter '{key}'")))?;
    raw.parse()
        .map_err(|e| ApiError::bad_request(format!("invalid '{key}': {e}")))
}

fn optional<T: FromStr>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    match q.get(key) {
        None => Ok(None),
        Some(_) => required(q, key).map(Some),
    }
}

fn created(id: &str) -> Response {
    (StatusCode::CREATED, Json(json!({ "id": id }))).into_response()
}

async fn post_index(State(rt): State<Runtime>, bytes: Bytes) -> Result<Response, ApiError> {
    let def: IndexDefinition = body(&bytes)?;
    let id = def.id.clone();
    rt.client().register_index(def).await?;
    Ok(created(&id))
}

#[derive(Deserialize)]
struct ValueBody {
    period: PeriodKey,
    value: f64,
}

async fn put_value(State(rt): State<Runtime>, Path(id): Path<String>, bytes: Bytes) -> Result<Response, ApiError> {
    let ValueBody { period, value } = body(&bytes)?;
    rt.client()
        .set_index_value(IndexValue {
            index_id: id,
            period,
            value,
        })
        .await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn post_model(State(rt): State<Runtime>, bytes: Bytes) -> Result<Response, ApiError> {
    let entry: ModelEntry = body(&bytes)?;
    let id = entry.id.clone();
    rt.client().register_model(entry).await?;
    Ok(created(&id))
}

async fn post_indicator(State(rt): State<Runtime>, bytes: Bytes) -> Result<Response, ApiError> {
    let entry: IndicatorEntry = body(&bytes)?;
    let id = entry.id.clone();
    rt.client().register_indicator(entry).await?;
    Ok(created(&id))
}

async fn replace(rt: &Runtime, id: String, entry: DefinitionEntry) -> Result<Response, ApiError> {
    rt.client().replace_definition(id.clone(), entry).await?;
    Ok(Json(json!({ "id": id })).into_response())
}

async fn put_model(State(rt): State<Runtime>, Path(id): Path<String>, bytes: Bytes) -> Result<Response, ApiError> {
    replace(&rt, id, DefinitionEntry::Model(body(&bytes)?)).await
}

async fn put_indicator(State(rt): State<Runtime>, Path(id): Path<String>, bytes: Bytes) -> Result<Response, ApiError> {
    replace(&rt, id, DefinitionEntry::Indicator(body(&bytes)?)).await
}

async fn get_services(State(rt): State<Runtime>, q: Params) -> Result<Response, ApiError> {
    let q = params(q)?;
    let tier = optional::<TierFilter>(&q, "tier")?.unwrap_or(TierFilter::All);
    Ok(Json(rt.snapshot().list_services(tier)).into_response())
}

async fn get_indicator(State(rt): State<Runtime>, Path(id): Path<String>, q: Params) -> Result<Response, ApiError> {
    let q = params(q)?;
    let period: PeriodKey = required(&q, "period")?;
    let mode: Option<Mode> = optional(&q, "mode")?;
    let mut entries = rt.client().compute(vec![id], period, mode).await?;
    match entries.pop().map(|e| e.outcome) {
        Some(Ok(report)) => Ok(Json(report).into_response()),
        Some(Err(e)) => Err((&e).into()),
        None => Err(ApiError::bad_request("empty compute response")),
    }
}

#[derive(Deserialize)]
struct ReportsBody {
    ids: Vec<String>,
    period: PeriodKey,
    #[serde(default)]
    mode: Option<Mode>,
}

async fn post_reports(State(rt): State<Runtime>, bytes: Bytes) -> Result<Response, ApiError> {
    let ReportsBody { ids, period, mode } = body(&bytes)?;
    let entries = rt.client().compute(ids, period, mode).await?;
    let out: Vec<_> = entries
        .into_iter()
        .map(|e| match e.outcome {
            Ok(report) => json!({ "id": e.id, "status": 200, "report": report }),
            Err(err) => {
                let api = ApiError::from(&err);
                json!({ "id": e.id, "status": api.status.as_u16(), "error": api })
            }
        })
        .collect();
    Ok(Json(out).into_response())
}

async fn get_series(State(rt): State<Runtime>, Path(id): Path<String>, q: Params) -> Result<Response, ApiError> {
    let q = params(q)?;
    let from: PeriodKey = required(&q, "from")?;
    let to: PeriodKey = required(&q, "to")?;
    if let Some(mode) = optional::<Mode>(&q, "mode")? {
        if mode != Mode::Histogram {
            return Err(ApiError::bad_request(format!("series supports mode 'histogram' only, not '{mode}'")));
        }
    }
    let descriptor = rt.client().series(id, from, to).await?;
    Ok(Json(descriptor).into_response())
}

async fn get_anomalies(State(rt): State<Runtime>, q: Params) -> Result<Response, ApiError> {
    let q = params(q)?;
    let category: Option<Category> = optional(&q, "category")?;
    Ok(Json(rt.anomalies(category)).into_response())
}

#[derive(Serialize)]
struct EntryResult {
    section: Section,
    id: String,
    status: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ApiError>,
}

async fn post_pack(State(rt): State<Runtime>, bytes: Bytes) -> Result<Response, ApiError> {
    let pack: Pack = body(&bytes)?;
    let outcomes = rt.client().load_pack(pack).await?;
    let results: Vec<EntryResult> = outcomes
        .into_iter()
        .map(|o| {
            let error = o.result.as_ref().err().map(ApiError::from);
            EntryResult {
                section: o.section,
                id: o.id,
                status: error.as_ref().map_or(201, |e| e.status.as_u16()),
                error,
            }
        })
        .collect();
    Ok((StatusCode::MULTI_STATUS, Json(json!({ "results": results }))).into_response())
}

async fn export_pack(State(rt): State<Runtime>) -> Response {
    Json(Pack::from_catalog(&rt.snapshot(), "export")).into_response()
}
