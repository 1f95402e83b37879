use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use direct_core::harness::config::ExperimentConfig;
use serde::de::DeserializeOwned;

use crate::api::{BatchDoc, CreateRequest, CreateResponse, LabelRequest, StateDoc};
use crate::error::{ServiceError, ServiceResult};
use crate::state::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/batch", get(next_batch))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(state)
}

/// Parses a JSON body ourselves so malformed input gets the usual error shape.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(format!("malformed body: {e}")))
}

/// Serde reports unknown or missing fields as "... field `name` ...".
fn config_from_json(value: serde_json::Value) -> ServiceResult<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        let field = message.split('`').nth(1).map(str::to_string);
        ServiceError::InvalidConfig { field, message }
    })?;
    config.validate().map_err(ServiceError::from_config)?;
    Ok(config)
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ServiceResult<Response> {
    let request: CreateRequest = parse(&body)?;
    let config = config_from_json(request.config)?;
    let (handle, created) = state.create(config, request.idempotency_token).await?;
    let session = handle.lock().await;
    let response = CreateResponse { id: session.id().to_string(), state: session.state() };
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(response)).into_response())
}

async fn next_batch(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<BatchDoc>> {
    let handle = state.get(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.batch()))
}

async fn submit_labels(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ServiceResult<Json<StateDoc>> {
    let handle = state.get(&id)?;
    let request: LabelRequest = parse(&body)?;
    let mut session = handle.lock_owned().await;
    // Retraining at a round boundary is CPU-bound; keep it off the runtime.
    let doc = tokio::task::spawn_blocking(move || session.submit(&request, |snapshot| state.persist(snapshot)))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(doc))
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<StateDoc>> {
    let handle = state.get(&id)?;
    let session = handle.lock().await;
    Ok(Json(session.state()))
}

async fn get_log(State(state): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    let handle = state.get(&id)?;
    let csv = handle.lock().await.log_csv()?;
    let disposition = format!("attachment; filename=\"{id}.csv\"");
    Ok(([(header::CONTENT_TYPE, "text/csv".to_string()), (header::CONTENT_DISPOSITION, disposition)], csv).into_response())
}
