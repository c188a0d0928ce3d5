//! Wire messages exchanged with live viewers. Every message is one JSON
//! object whose `type` field selects the variant.

use serde::{Deserialize, Serialize};

use crate::formation::distance_errors;
use crate::formation::relative_positions;
use crate::geometry::Vec2;
use crate::motion::MotionCommand;
use crate::sim::{SimConfig, Simulation, TickRecord};

pub const TELEMETRY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSnapshot {
    pub id: usize,
    pub i: usize,
    pub j: usize,
    pub d: f64,
    pub e_tail: f64,
    pub e_head: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub robots: Vec<RobotSnapshot>,
    pub edges: Vec<EdgeSnapshot>,
    pub centroid: Vec2,
    pub orient: f64,
    pub active_command: MotionCommand,
    pub estimator_enabled: bool,
}

impl Snapshot {
    /// Current world state. Error signals come from `last`, the record of the
    /// most recent tick; before the first tick both sides report the true
    /// distance error.
    pub fn capture(sim: &Simulation, last: Option<&TickRecord>) -> Snapshot {
        let world = sim.world();
        let shape = sim.current_shape();
        let graph = shape.graph();
        let fallback = relative_positions(&world.positions, graph)
            .and_then(|z| distance_errors(&z, shape.desired_distances()))
            .unwrap_or_else(|_| vec![0.0; graph.edge_count()]);
        Snapshot {
            t: world.t,
            robots: world
                .positions
                .iter()
                .zip(&world.headings)
                .enumerate()
                .map(|(id, (p, h))| RobotSnapshot {
                    id,
                    x: p.x,
                    y: p.y,
                    heading: *h,
                })
                .collect(),
            edges: graph
                .edges()
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    let (e_tail, e_head, mu_hat) = match last {
                        Some(r) => (r.edges[k].e_tail, r.edges[k].e_head, r.edges[k].mu_hat),
                        None => (fallback[k], fallback[k], None),
                    };
                    EdgeSnapshot {
                        id: k,
                        i: e.tail,
                        j: e.head,
                        d: shape.desired_distance(k),
                        e_tail,
                        e_head,
                        mu_hat,
                    }
                })
                .collect(),
            centroid: world.centroid(),
            orient: last.map_or(world.orient, |r| r.orient),
            active_command: world.command,
            estimator_enabled: world.estimator_enabled,
        }
    }

    /// Snapshot of a stored tick. Headings and desired distances come from
    /// the scenario, as the log does not carry them.
    pub fn from_record(record: &TickRecord, config: &SimConfig) -> Snapshot {
        let graph = config.shape.graph();
        Snapshot {
            t: record.t,
            robots: record
                .robots
                .iter()
                .enumerate()
                .map(|(id, r)| RobotSnapshot {
                    id,
                    x: r.x,
                    y: r.y,
                    heading: config.headings.get(id).copied().unwrap_or(0.0),
                })
                .collect(),
            edges: record
                .edges
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    let edge = graph.edge(k);
                    EdgeSnapshot {
                        id: k,
                        i: edge.tail,
                        j: edge.head,
                        d: config.shape.desired_distance(k),
                        e_tail: e.e_tail,
                        e_head: e.e_head,
                        mu_hat: e.mu_hat,
                    }
                })
                .collect(),
            centroid: record.centroid,
            orient: record.orient,
            active_command: MotionCommand::ZERO,
            estimator_enabled: record.edges.iter().any(|e| e.mu_hat.is_some()),
        }
    }
}

/// Messages sent by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello {
        schema_version: u32,
        scenario_digest: String,
    },
    Snapshot(Snapshot),
    Error {
        detail: String,
    },
}

/// Messages accepted from viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Motion(MotionCommand),
    Estimator {
        enabled: bool,
    },
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<String>,
    },
}

impl ServerMessage {
    pub fn hello(scenario_digest: impl Into<String>) -> Self {
        ServerMessage::Hello {
            schema_version: TELEMETRY_SCHEMA_VERSION,
            scenario_digest: scenario_digest.into(),
        }
    }

    pub fn error(detail: impl std::fmt::Display) -> Self {
        ServerMessage::Error {
            detail: detail.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

impl ClientMessage {
    /// Parses one text frame. The error string is meant for an error reply.
    pub fn parse(text: &str) -> Result<ClientMessage, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid command: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }
}
