use thiserror::Error;

use crate::control::EstimationCycle;
use crate::formation::RigidityClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value {0}")]
    NonFinite(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("motion not realizable: robot {robot} residual {residual:.3e} m/s exceeds {tolerance:.0e}")]
    UnrealizableMotion {
        robot: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("shape is not infinitesimally rigid ({0})")]
    NotRigid(RigidityClass),

    #[error("robot {robot} has no measurement for incident edge {edge}")]
    MissingMeasurement { robot: usize, edge: usize },

    #[error("robot {robot} received a measurement for non-incident edge {edge}")]
    ForeignMeasurement { robot: usize, edge: usize },

    #[error("robot {robot} is not the assigned estimator of edge {edge}")]
    NotAssigned { robot: usize, edge: usize },

    #[error("edge {edge} carries a bias but has no assigned estimator")]
    UnassignedBiasedEdge { edge: usize },

    #[error("estimation assignment contains a loop: {0}")]
    EstimationCycle(EstimationCycle),

    #[error("motion parameter supports differ: {0}")]
    SupportMismatch(String),

    #[error("edge {edge} out of sensor range: {distance:.3} m > {max_range} m")]
    OutOfRange { edge: usize, distance: f64, max_range: f64 },

    #[error("formation broken at t = {t:.1} s: {source}")]
    FormationBroken {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario parse error at line {line}, column {column}{}: {message}", path_suffix(.path))]
    ScenarioParse {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },

    #[error("scenario field `{field}`: {message}")]
    ScenarioField { field: String, message: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("log schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: String, expected: u32 },

    #[error("malformed log: {0}")]
    MalformedLog(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn path_suffix(path: &str) -> String {
    if path.is_empty() || path == "." {
        String::new()
    } else {
        format!(" (field `{path}`)")
    }
}
