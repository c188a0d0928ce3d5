use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::Json;
use formation_core::api::{
    ErrorKind, HealthResponse, MetricsRequest, MotionRequest, MotionResponse, RigidityResponse, RunRequest,
    RunResponse, ScenarioRequest, ScenarioSummary, SessionCommands, SessionInfo,
};
use formation_core::log::{log_from_str, log_to_string, LOG_SCHEMA_VERSION};
use formation_core::motion::solve_motion_parameters;
use formation_core::scenario::bundled_names;
use formation_core::{metrics, run, Metrics, Scenario, TELEMETRY_SCHEMA_VERSION};
use serde::de::DeserializeOwned;

use crate::error::{ApiResult, AppError};
use crate::{AppState, SessionHandle};

/// `Json` whose rejections render as `bad_request` bodies.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = AppError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(e) => Err(rejection(e)),
        }
    }
}

fn rejection(e: JsonRejection) -> AppError {
    AppError::new(ErrorKind::BadRequest, e.body_text())
}

pub async fn health() -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        log_schema_version: LOG_SCHEMA_VERSION,
        telemetry_schema_version: TELEMETRY_SCHEMA_VERSION,
    })
}

pub async fn list_scenarios() -> ApiResult<Vec<ScenarioSummary>> {
    let mut out = Vec::new();
    for name in bundled_names() {
        out.push(ScenarioSummary::of(&Scenario::bundled(name)?));
    }
    Ok(Json(out))
}

/// The effective document, defaults filled in.
pub async fn get_scenario(Path(name): Path<String>) -> ApiResult<serde_json::Value> {
    let s = Scenario::bundled(&name)?;
    Ok(Json(
        serde_json::to_value(&s.file).map_err(|e| AppError::new(ErrorKind::Internal, e.to_string()))?,
    ))
}

pub async fn rigidity(ApiJson(req): ApiJson<ScenarioRequest>) -> ApiResult<RigidityResponse> {
    let s = req.scenario.resolve()?;
    Ok(Json(s.config.shape.rigidity()?.into()))
}

pub async fn motion(ApiJson(req): ApiJson<MotionRequest>) -> ApiResult<MotionResponse> {
    let s = req.scenario.resolve()?;
    let solution = solve_motion_parameters(&s.config.shape, &req.command)?;
    Ok(Json(MotionResponse {
        parameters: solution.parameters.entries().collect(),
        residuals: solution.residuals,
    }))
}

pub async fn run_scenario(ApiJson(req): ApiJson<RunRequest>) -> ApiResult<RunResponse> {
    // Long runs would otherwise stall the reactor.
    tokio::task::spawn_blocking(move || -> Result<RunResponse, AppError> {
        let mut s = req.scenario.resolve()?;
        if let Some(seed) = req.seed {
            s = s.with_seed(seed)?;
        }
        if let Some(duration) = req.duration {
            s = s.with_duration(duration)?;
        }
        let records = run(&s.config, &s.schedule)?;
        let metrics = match records.is_empty() {
            true => None,
            false => Some(metrics(&records, &req.metrics)?),
        };
        Ok(RunResponse {
            scenario_digest: s.digest(),
            ticks: records.len(),
            log: log_to_string(&s.log_header(), &records)?,
            metrics,
        })
    })
    .await
    .map_err(|e| AppError::new(ErrorKind::Internal, e.to_string()))?
    .map(Json)
}

pub async fn metrics_of_log(ApiJson(req): ApiJson<MetricsRequest>) -> ApiResult<Metrics> {
    let log = log_from_str(&req.log)?;
    Ok(Json(metrics(&log.records, &req.options)?))
}

fn session(state: &AppState) -> Result<&SessionHandle, AppError> {
    state
        .session
        .as_ref()
        .ok_or_else(|| AppError::new(ErrorKind::NoSession, "no session is running on this server"))
}

fn stopped() -> AppError {
    AppError::new(ErrorKind::Internal, "session has stopped")
}

pub async fn session_info(State(state): State<AppState>) -> ApiResult<SessionInfo> {
    session(&state)?.info().await.map(Json).ok_or_else(stopped)
}

/// The session's trajectory so far, as a CSV log.
pub async fn session_log(State(state): State<AppState>) -> Result<String, AppError> {
    Ok(session(&state)?.log().await.ok_or_else(stopped)??)
}

pub async fn session_commands(State(state): State<AppState>) -> ApiResult<SessionCommands> {
    session(&state)?.commands().await.map(Json).ok_or_else(stopped)
}
