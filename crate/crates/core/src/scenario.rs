//! Scenario documents: a single JSON object describing the team, the desired
//! shape, sensing, estimation and a command schedule.
//!
//! ```json
//! {
//!   "name": "triangle",
//!   "shape": {
//!     "edges": [[0, 1], [1, 2], [2, 0]],
//!     "reference_positions": [[0, 0], [1, 0], [0.5, 0.8]]
//!   },
//!   "sim": { "duration": 10 }
//! }
//! ```
//!
//! Every section other than `shape` is optional. Robot ids are 0-based.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{validate_estimation_assignment, EstimatorAssignment};
use crate::error::{Error, Result};
use crate::formation::{Edge, FormationGraph, RobotId, ShapeSpec};
use crate::geometry::Vec2;
use crate::log::LogHeader;
use crate::motion::MotionLimits;
use crate::sensor::{seeded_headings, ActuatorSpec, BiasEntry, BiasTable, LidarSpec};
use crate::sim::{EstimatorConfig, ScheduledCommand, SimConfig, DEFAULT_DT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub shape: ShapeSection,
    #[serde(default)]
    pub robots: RobotsSection,
    #[serde(default)]
    pub biases: Vec<BiasEntry>,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub lidar: LidarSpec,
    #[serde(default)]
    pub actuator: ActuatorSpec,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub motion_limits: MotionLimits,
    #[serde(default)]
    pub commands: Vec<ScheduledCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    pub edges: Vec<Edge>,
    /// Derived from the reference positions when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    pub reference_positions: Vec<Vec2>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Start at the reference positions when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_positions: Option<Vec<Vec2>>,
    pub headings: Headings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadingMode {
    /// Random mount angles drawn from the scenario seed.
    #[default]
    Seeded,
    /// Every sensor frame aligned with the world frame.
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Headings {
    Mode(HeadingMode),
    Explicit(Vec<f64>),
}

impl Default for Headings {
    fn default() -> Self {
        Headings::Mode(HeadingMode::Seeded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// No edge is estimated.
    None,
    /// The tail robot of every edge estimates it.
    Tail,
    /// The biased robot of every biased edge estimates it.
    Biased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssignmentSpec {
    Mode(AssignmentMode),
    /// One entry per edge: the estimating robot or `null`.
    Explicit(Vec<Option<RobotId>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub enabled: bool,
    pub gain: f64,
    pub assignment: AssignmentSpec,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            enabled: false,
            gain: 1.0,
            assignment: AssignmentSpec::Mode(AssignmentMode::Biased),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub substeps: u32,
    pub control_gain: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dt: DEFAULT_DT,
            duration: 60.0,
            seed: 0,
            substeps: 1,
            control_gain: 1.0,
        }
    }
}

/// A validated scenario: the effective document with every default filled
/// in, plus the simulation inputs it describes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub config: SimConfig,
    pub schedule: Vec<ScheduledCommand>,
}

fn field_err(field: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::ScenarioField {
        field: field.into(),
        message: e.to_string(),
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        parse_error(&inner, path)
    })?;
    de.end().map_err(|e| parse_error(&e, String::new()))?;
    Scenario::from_file(file)
}

fn parse_error(e: &serde_json::Error, path: String) -> Error {
    let full = e.to_string();
    let message = match full.rsplit_once(" at line ") {
        Some((head, _)) => head.to_string(),
        None => full,
    };
    Error::ScenarioParse {
        line: e.line(),
        column: e.column(),
        path,
        message,
    }
}

impl Scenario {
    pub fn from_file(mut file: ScenarioFile) -> Result<Self> {
        let refs = file.shape.reference_positions.clone();
        let n = refs.len();
        if let Some(count) = file.robots.count {
            if count != n {
                return Err(field_err(
                    "robots.count",
                    format!("{count} robots declared but shape has {n} reference positions"),
                ));
            }
        }
        let graph = FormationGraph::new(n, file.shape.edges.clone()).map_err(|e| field_err("shape.edges", e))?;
        let shape = match &file.shape.distances {
            Some(d) => ShapeSpec::new(graph.clone(), d.clone(), refs.clone()),
            None => ShapeSpec::from_reference(graph.clone(), refs.clone()),
        }
        .map_err(|e| field_err("shape", e))?;

        let initial = file.robots.initial_positions.clone().unwrap_or_else(|| refs.clone());
        if initial.len() != n {
            return Err(field_err(
                "robots.initial_positions",
                format!("expected {n} positions, got {}", initial.len()),
            ));
        }
        let headings = match &file.robots.headings {
            Headings::Mode(HeadingMode::Seeded) => seeded_headings(file.sim.seed, n),
            Headings::Mode(HeadingMode::Aligned) => vec![0.0; n],
            Headings::Explicit(h) if h.len() == n => h.clone(),
            Headings::Explicit(h) => {
                return Err(field_err(
                    "robots.headings",
                    format!("expected {n} headings, got {}", h.len()),
                ))
            }
        };

        for (idx, b) in file.biases.iter().enumerate() {
            if b.edge >= graph.edge_count() {
                return Err(field_err(format!("biases[{idx}].edge"), format!("no edge {}", b.edge)));
            }
        }
        let biases = BiasTable::new(file.biases.clone(), &graph).map_err(|e| field_err("biases", e))?;

        let assignment = match &file.estimator.assignment {
            AssignmentSpec::Mode(AssignmentMode::None) => EstimatorAssignment::none(&graph),
            AssignmentSpec::Mode(AssignmentMode::Tail) => EstimatorAssignment::tails(&graph),
            AssignmentSpec::Mode(AssignmentMode::Biased) => {
                let mut owners = vec![None; graph.edge_count()];
                for b in biases.entries() {
                    owners[b.edge] = Some(b.robot);
                }
                EstimatorAssignment::new(owners, &graph).map_err(|e| field_err("estimator.assignment", e))?
            }
            AssignmentSpec::Explicit(v) => {
                EstimatorAssignment::new(v.clone(), &graph).map_err(|e| field_err("estimator.assignment", e))?
            }
        };
        if file.estimator.enabled {
            // Cycle errors keep their own type.
            validate_estimation_assignment(&assignment, &graph, &biases).map_err(|e| match e {
                Error::EstimationCycle(_) => e,
                other => field_err("estimator.assignment", other),
            })?;
        }

        for (idx, c) in file.commands.iter().enumerate() {
            if !(c.t >= 0.0 && c.t <= file.sim.duration) {
                return Err(field_err(
                    format!("commands[{idx}].t"),
                    format!("{} lies outside [0, {}]", c.t, file.sim.duration),
                ));
            }
        }

        let config = SimConfig {
            dt: file.sim.dt,
            duration: file.sim.duration,
            seed: file.sim.seed,
            substeps: file.sim.substeps,
            control_gain: file.sim.control_gain,
            shape: shape.clone(),
            initial_positions: initial.clone(),
            headings,
            biases,
            estimator: EstimatorConfig {
                enabled: file.estimator.enabled,
                gain: file.estimator.gain,
                assignment: assignment.clone(),
            },
            lidar: file.lidar,
            actuator: file.actuator,
            motion_limits: file.motion_limits,
        };
        config.validate().map_err(|e| match e {
            Error::EstimationCycle(_) => e,
            other => field_err("sim", other),
        })?;

        file.robots.count = Some(n);
        file.robots.initial_positions = Some(initial);
        file.shape.distances = Some(shape.desired_distances().to_vec());
        file.estimator.assignment = AssignmentSpec::Explicit(assignment.as_slice().to_vec());
        let mut schedule = file.commands.clone();
        schedule.sort_by(|a, b| a.t.total_cmp(&b.t));
        file.commands = schedule.clone();

        Ok(Scenario { file, config, schedule })
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = bundled_text(name).ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
        load_scenario(text)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    /// Same scenario with a different seed. Seeded headings are redrawn.
    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        let mut file = self.file.clone();
        file.sim.seed = seed;
        Scenario::from_file(file)
    }

    /// Same scenario cut or extended to `duration`. Commands scheduled
    /// after the new end are dropped.
    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        let mut file = self.file.clone();
        file.sim.duration = duration;
        file.commands.retain(|c| c.t <= duration);
        Scenario::from_file(file)
    }

    /// Canonical JSON of the effective document.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.file).expect("scenario serializes")
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    /// Hex SHA-256 of [`Scenario::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Header for logs of runs of this scenario.
    pub fn log_header(&self) -> LogHeader {
        LogHeader {
            scenario_digest: self.digest(),
            robot_count: self.config.robot_count(),
            edge_count: self.config.shape.graph().edge_count(),
        }
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("square-1m", include_str!("../scenarios/square-1m.json")),
    ("square-1m-biased", include_str!("../scenarios/square-1m-biased.json")),
    (
        "square-1m-estimator",
        include_str!("../scenarios/square-1m-estimator.json"),
    ),
    ("office-tour", include_str!("../scenarios/office-tour.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
