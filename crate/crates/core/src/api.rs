//! Request and response bodies of the HTTP/JSON service.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::formation::{RigidityClass, RigidityReport};
use crate::metrics::{Metrics, MetricsOptions};
use crate::motion::{MotionCommand, SigmaEntry};
use crate::scenario::{load_scenario, Scenario};
use crate::sim::ScheduledCommand;

/// How a request names its scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    /// A bundled scenario.
    Name(String),
    /// Raw document text; parse errors point into this text.
    Text { text: String },
    /// An inline document.
    Document(serde_json::Value),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<Scenario, Error> {
        match self {
            ScenarioRef::Name(n) => Scenario::bundled(n),
            ScenarioRef::Text { text } => load_scenario(text),
            ScenarioRef::Document(v) => load_scenario(&v.to_string()),
        }
    }
}

impl From<&str> for ScenarioRef {
    fn from(name: &str) -> Self {
        ScenarioRef::Name(name.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    pub log_schema_version: u32,
    pub telemetry_schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub description: String,
    pub robots: usize,
    pub edges: usize,
    pub duration: f64,
}

impl ScenarioSummary {
    pub fn of(s: &Scenario) -> Self {
        ScenarioSummary {
            name: s.name().to_string(),
            description: s.file.description.clone(),
            robots: s.config.robot_count(),
            edges: s.config.shape.graph().edge_count(),
            duration: s.config.duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRequest {
    pub scenario: ScenarioRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigidityResponse {
    pub rank: usize,
    pub dof: usize,
    pub classification: RigidityClass,
    pub rigid: bool,
}

impl From<RigidityReport> for RigidityResponse {
    fn from(r: RigidityReport) -> Self {
        RigidityResponse {
            rank: r.rank,
            dof: r.dof,
            classification: r.classification,
            rigid: r.is_rigid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRequest {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub command: MotionCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionResponse {
    pub parameters: Vec<SigmaEntry>,
    /// Per-robot least-squares residual, m/s.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub scenario: ScenarioRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default)]
    pub metrics: MetricsOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub scenario_digest: String,
    pub ticks: usize,
    /// Full CSV log.
    pub log: String,
    /// Absent for runs with no ticks.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRequest {
    pub log: String,
    #[serde(default)]
    pub options: MetricsOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorToggle {
    pub t: f64,
    pub enabled: bool,
}

/// What a live session has applied so far, tick-aligned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionCommands {
    pub scenario_digest: String,
    pub motion: Vec<ScheduledCommand>,
    pub estimator: Vec<EstimatorToggle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub mode: SessionMode,
    pub scenario: String,
    pub scenario_digest: String,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    Live,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    ScenarioInvalid,
    NotRigid,
    UnrealizableMotion,
    FormationBroken,
    InvalidLog,
    BadRequest,
    NotFound,
    NoSession,
    Internal,
}

impl ErrorKind {
    pub fn of(e: &Error) -> ErrorKind {
        match e {
            Error::NotRigid(_) => ErrorKind::NotRigid,
            Error::UnrealizableMotion { .. } => ErrorKind::UnrealizableMotion,
            Error::FormationBroken { .. } => ErrorKind::FormationBroken,
            Error::SchemaVersion { .. } | Error::MalformedLog(_) | Error::Csv(_) => ErrorKind::InvalidLog,
            Error::UnknownScenario(_) => ErrorKind::NotFound,
            Error::Io(_) => ErrorKind::Internal,
            Error::Empty(_) => ErrorKind::BadRequest,
            _ => ErrorKind::ScenarioInvalid,
        }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: ErrorKind,
    pub detail: String,
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        ApiError {
            error: ErrorKind::of(e),
            detail: e.to_string(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.detail)
    }
}

impl std::error::Error for ApiError {}
