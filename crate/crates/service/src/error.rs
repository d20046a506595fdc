use std::fmt::Debug;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use kes_core::ingest::LoadError;
use kes_core::wire::ErrorBody;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { error: error.into(), message: message.into(), line: None } }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn invalid(error: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error, message)
    }

    pub fn not_found(error: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, message)
    }

    fn with_line(mut self, line: Option<u64>) -> Self {
        self.body.line = line;
        self
    }
}

/// Name of an enum variant as printed by `Debug`, e.g. `MalformedRow`.
pub fn variant_name<T: Debug>(value: &T) -> String {
    let debug = format!("{value:?}");
    debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

impl From<LoadError> for ApiError {
    fn from(err: LoadError) -> Self {
        let message = err.to_string();
        match &err {
            LoadError::Pb(e) => ApiError::new(StatusCode::BAD_REQUEST, variant_name(e), message)
                .with_line(e.line().map(|l| l as u64)),
            LoadError::Groups(e) => {
                let line = match e {
                    kes_core::ingest::GroupPointsError::Malformed { line, .. }
                    | kes_core::ingest::GroupPointsError::UnknownField { line, .. }
                    | kes_core::ingest::GroupPointsError::NegativePoints { line, .. }
                    | kes_core::ingest::GroupPointsError::DuplicatePair { line, .. } => *line,
                };
                ApiError::new(StatusCode::BAD_REQUEST, variant_name(e), message).with_line(Some(line))
            }
            LoadError::Config(e) => ApiError::invalid(variant_name(e), message),
            LoadError::Model(e) => ApiError::invalid(variant_name(e), message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
