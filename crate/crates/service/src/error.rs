use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use decisio_core::agents::Fault;
use decisio_core::compute::ComputeError;
use decisio_core::domains::EntryError;
use decisio_core::registry::RegistryError;
use decisio_core::viz::VizError;

/// Machine-readable error codes of the HTTP API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    DuplicateId,
    UnknownDependency,
    Cycle,
    UnknownId,
    MissingValue,
    EvaluationError,
    BadRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
    pub offending_ids: Vec<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>, offending_ids: Vec<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            offending_ids,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorCode::BadRequest, message, Vec::new())
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, ErrorCode::UnknownId, message, Vec::new())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<&RegistryError> for ApiError {
    fn from(e: &RegistryError) -> Self {
        let (status, code) = match e {
            RegistryError::DuplicateId(_) => (StatusCode::CONFLICT, ErrorCode::DuplicateId),
            RegistryError::UnknownDependency { .. } => (StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::UnknownDependency),
            RegistryError::CycleDetected { .. } => (StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::Cycle),
            RegistryError::UnknownId(_) | RegistryError::UnknownIndex(_) => (StatusCode::NOT_FOUND, ErrorCode::UnknownId),
            RegistryError::NonFiniteValue(_) | RegistryError::TierMismatch { .. } | RegistryError::Invalid { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::BadRequest)
            }
        };
        ApiError::new(status, code, e.to_string(), e.offending_ids())
    }
}

impl From<&ComputeError> for ApiError {
    fn from(e: &ComputeError) -> Self {
        let (status, code) = match e {
            ComputeError::UnknownIndicator(_) | ComputeError::UnknownService(_) => {
                (StatusCode::NOT_FOUND, ErrorCode::UnknownId)
            }
            ComputeError::MissingIndexValue { .. } | ComputeError::Visualization(VizError::EmptySeries(_)) => {
                (StatusCode::CONFLICT, ErrorCode::MissingValue)
            }
            ComputeError::Evaluation { .. } => (StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::EvaluationError),
            ComputeError::InvalidRange { .. } => (StatusCode::BAD_REQUEST, ErrorCode::BadRequest),
        };
        ApiError::new(status, code, e.to_string(), e.offending_ids())
    }
}

impl From<&Fault> for ApiError {
    fn from(f: &Fault) -> Self {
        match f {
            Fault::Registry(e) => e.into(),
            Fault::Compute(e) => e.into(),
            Fault::Formula(e) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorCode::BadRequest,
                e.to_string(),
                vec![e.id.clone()],
            ),
            Fault::Protocol(msg) => ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                ErrorCode::BadRequest,
                msg.clone(),
                Vec::new(),
            ),
        }
    }
}

impl From<Fault> for ApiError {
    fn from(f: Fault) -> Self {
        (&f).into()
    }
}

impl From<&EntryError> for ApiError {
    fn from(e: &EntryError) -> Self {
        Fault::from(e.clone()).into()
    }
}
