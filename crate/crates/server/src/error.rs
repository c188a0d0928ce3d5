use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use formation_core::api::{ApiError, ErrorKind};
use formation_core::Error;

/// Handler error rendered as `{"error": kind, "detail": text}`.
#[derive(Debug)]
pub struct AppError(pub ApiError);

impl AppError {
    pub fn new(error: ErrorKind, detail: impl Into<String>) -> Self {
        AppError(ApiError {
            error,
            detail: detail.into(),
        })
    }

    pub fn status(&self) -> StatusCode {
        match self.0.error {
            ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound | ErrorKind::NoSession => StatusCode::NOT_FOUND,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        AppError(ApiError::from(&e))
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.0)).into_response()
    }
}

pub type ApiResult<T> = Result<Json<T>, AppError>;
