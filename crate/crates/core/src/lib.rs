//! Distance-based formation control for teams of omnidirectional robots that
//! sense their neighbors with a planar range/bearing sensor.
//!
//! The crate covers the formation graph and its rigidity, the gradient
//! control law, rigid-body motion synthesis through per-edge motion
//! parameters, a biased noisy sensor model, online bias estimation, a
//! deterministic fixed-step simulator, scenario files, CSV trajectory logs
//! and the telemetry message types.
//!
//! ```
//! use formation_core::{run, Scenario};
//!
//! let scenario = Scenario::bundled("square-1m").unwrap();
//! let records = run(&scenario.config, &scenario.schedule).unwrap();
//! assert!(records.last().unwrap().max_abs_error() < 1e-3);
//! ```

pub mod api;
pub mod control;
pub mod error;
pub mod formation;
pub mod geometry;
pub mod log;
pub mod metrics;
pub mod motion;
pub mod scenario;
pub mod sensor;
pub mod sim;
pub mod telemetry;

pub use control::{
    biased_pair_dynamics, compose_sigma, estimator_step, gradient_control, motion_control, robot_control,
    validate_estimation_assignment, BiasedPairReport, EstimationCycle, EstimatorAssignment, EstimatorState,
    LocalMeasurement,
};
pub use error::{Error, Result};
pub use formation::{
    build_incidence, check_infinitesimal_rigidity, distance_errors, is_collinear, potential, relative_positions,
    rigidity_matrix, Edge, EdgeId, FormationGraph, RigidityClass, RigidityReport, RobotId, ShapeSpec,
};
pub use geometry::{wrap_angle, Vec2};
pub use log::{read_log, read_log_file, write_log, write_log_file, LogHeader, TrajectoryLog, LOG_SCHEMA_VERSION};
pub use metrics::{metrics, Metrics, MetricsOptions};
pub use motion::{
    reconstruct_velocities, solve_motion_parameters, MotionBasis, MotionCommand, MotionLimits, MotionParameters,
    MotionSolution,
};
pub use scenario::{load_scenario, Scenario, ScenarioFile};
pub use sensor::{apply_actuation, measure_edge, ActuatorSpec, BiasTable, LidarSpec};
pub use sim::{run, ScheduledCommand, SimConfig, Simulation, TickRecord, WorldState};
pub use telemetry::{ClientMessage, ServerMessage, Snapshot, TELEMETRY_SCHEMA_VERSION};
