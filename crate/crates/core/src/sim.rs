//! Fixed-step closed-loop simulation of the whole team.

use serde::{Deserialize, Serialize};

use crate::control::{
    estimator_step, robot_control, validate_estimation_assignment, EstimatorAssignment, EstimatorState,
    LocalMeasurement,
};
use crate::error::{Error, Result};
use crate::formation::{check_len, ShapeSpec};
use crate::geometry::{centroid, wrap_angle, Vec2};
use crate::motion::{MotionBasis, MotionCommand, MotionLimits};
use crate::sensor::{apply_actuation, measure_edge, ActuatorSpec, BiasTable, LidarSpec, NoiseStream};

/// Control period of the reference platform, seconds.
pub const DEFAULT_DT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub enabled: bool,
    /// Estimator gain `c`, 1/s.
    pub gain: f64,
    pub assignment: EstimatorAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Control cycles per recorded tick.
    pub substeps: u32,
    /// Multiplies the distance-error term of every robot.
    pub control_gain: f64,
    pub shape: ShapeSpec,
    pub initial_positions: Vec<Vec2>,
    /// Fixed mount angle of each robot's sensor frame, radians.
    pub headings: Vec<f64>,
    pub biases: BiasTable,
    pub estimator: EstimatorConfig,
    pub lidar: LidarSpec,
    pub actuator: ActuatorSpec,
    pub motion_limits: MotionLimits,
}

impl SimConfig {
    /// Noiseless, unbiased, deadband-free configuration starting at the
    /// reference positions with aligned headings.
    pub fn ideal(shape: ShapeSpec, duration: f64) -> Self {
        let n = shape.graph().robot_count();
        SimConfig {
            dt: DEFAULT_DT,
            duration,
            seed: 0,
            substeps: 1,
            control_gain: 1.0,
            initial_positions: shape.reference_positions().to_vec(),
            headings: vec![0.0; n],
            biases: BiasTable::default(),
            estimator: EstimatorConfig {
                enabled: false,
                gain: 1.0,
                assignment: EstimatorAssignment::none(shape.graph()),
            },
            lidar: LidarSpec::noiseless(),
            actuator: ActuatorSpec::ideal(),
            motion_limits: MotionLimits::default(),
            shape,
        }
    }

    pub fn robot_count(&self) -> usize {
        self.shape.graph().robot_count()
    }

    pub fn tick_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.robot_count();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "duration must be nonnegative, got {}",
                self.duration
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        if !(self.control_gain > 0.0 && self.control_gain.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "control gain must be positive, got {}",
                self.control_gain
            )));
        }
        check_len(n, self.initial_positions.len())?;
        check_len(n, self.headings.len())?;
        if self.initial_positions.iter().any(|p| !p.is_finite()) || self.headings.iter().any(|h| !h.is_finite()) {
            return Err(Error::NonFinite("initial state".into()));
        }
        self.lidar.validate()?;
        self.actuator.validate()?;
        if !(self.estimator.gain > 0.0 && self.estimator.gain.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "estimator gain must be positive, got {}",
                self.estimator.gain
            )));
        }
        let graph = self.shape.graph();
        if self.estimator.enabled {
            validate_estimation_assignment(&self.estimator.assignment, graph, &self.biases)?;
        } else {
            validate_estimation_assignment(&self.estimator.assignment, graph, &BiasTable::default())?;
        }
        Ok(())
    }
}

/// A motion command taking effect at the first tick with `t >= self.t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "FlatScheduled", into = "FlatScheduled")]
pub struct ScheduledCommand {
    pub t: f64,
    pub command: MotionCommand,
}

impl ScheduledCommand {
    pub fn new(t: f64, command: MotionCommand) -> Self {
        ScheduledCommand { t, command }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatScheduled {
    t: f64,
    #[serde(default)]
    vx: f64,
    #[serde(default)]
    vy: f64,
    #[serde(default)]
    omega: f64,
    #[serde(default)]
    scale: f64,
}

impl From<FlatScheduled> for ScheduledCommand {
    fn from(f: FlatScheduled) -> Self {
        ScheduledCommand {
            t: f.t,
            command: MotionCommand {
                v: Vec2::new(f.vx, f.vy),
                omega: f.omega,
                scale: f.scale,
            },
        }
    }
}

impl From<ScheduledCommand> for FlatScheduled {
    fn from(c: ScheduledCommand) -> Self {
        FlatScheduled {
            t: c.t,
            vx: c.command.v.x,
            vy: c.command.v.y,
            omega: c.command.omega,
            scale: c.command.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub x: f64,
    pub y: f64,
    /// Commanded speed, m/s.
    pub u: f64,
    /// Speed after the actuator model, m/s.
    pub u_act: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    /// Control error signal computed by the tail robot.
    pub e_tail: f64,
    /// Control error signal computed by the head robot.
    pub e_head: f64,
    /// Estimate held by the assigned robot, when the estimator runs.
    pub mu_hat: Option<f64>,
}

/// State of the team at the start of one control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub robots: Vec<RobotRecord>,
    pub edges: Vec<EdgeRecord>,
    pub centroid: Vec2,
    /// Unwrapped angle of the vector from the centroid to robot 0.
    pub orient: f64,
}

impl TickRecord {
    pub fn positions(&self) -> Vec<Vec2> {
        self.robots.iter().map(|r| Vec2::new(r.x, r.y)).collect()
    }

    /// Largest sensed error magnitude over both sides of every edge.
    pub fn max_abs_error(&self) -> f64 {
        self.edges
            .iter()
            .flat_map(|e| [e.e_tail.abs(), e.e_head.abs()])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub headings: Vec<f64>,
    pub estimators: Vec<EstimatorState>,
    pub estimator_enabled: bool,
    pub command: MotionCommand,
    /// Current size of the formation relative to the reference shape.
    pub size: f64,
    pub orient: f64,
    streams: Vec<NoiseStream>,
}

impl WorldState {
    pub fn initial(config: &SimConfig) -> Result<Self> {
        let n = config.robot_count();
        let estimators = (0..n)
            .map(|i| EstimatorState::new(i, config.estimator.gain, &config.estimator.assignment))
            .collect::<Result<Vec<_>>>()?;
        let orient = formation_angle(&config.initial_positions);
        Ok(WorldState {
            tick: 0,
            t: 0.0,
            positions: config.initial_positions.clone(),
            headings: config.headings.clone(),
            estimators,
            estimator_enabled: config.estimator.enabled,
            command: MotionCommand::ZERO,
            size: 1.0,
            orient,
            streams: (0..n as u64).map(|i| NoiseStream::new(config.seed, i)).collect(),
        })
    }

    pub fn centroid(&self) -> Vec2 {
        centroid(&self.positions)
    }

    pub fn mu_hat(&self, edge: usize) -> Option<f64> {
        self.estimators.iter().find_map(|s| s.mu_hat(edge))
    }
}

fn formation_angle(positions: &[Vec2]) -> f64 {
    (positions[0] - centroid(positions)).angle()
}

/// Owns one run: configuration, world and the command schedule.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    basis: Option<MotionBasis>,
    world: WorldState,
    schedule: Vec<ScheduledCommand>,
    next_command: usize,
    last_commands: Vec<Vec2>,
    last_actuated: Vec<Vec2>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        Self::with_schedule(config, Vec::new())
    }

    pub fn with_schedule(config: SimConfig, mut schedule: Vec<ScheduledCommand>) -> Result<Self> {
        config.validate()?;
        for (idx, c) in schedule.iter().enumerate() {
            if !(c.t >= 0.0 && c.t <= config.duration) {
                return Err(Error::InvalidConfig(format!(
                    "command {idx} at t = {} lies outside [0, {}]",
                    c.t, config.duration
                )));
            }
            if !c.command.is_finite() {
                return Err(Error::NonFinite(format!("command {idx}")));
            }
        }
        schedule.sort_by(|a, b| a.t.total_cmp(&b.t));
        // Motion is only synthesized on rigid shapes; others can still run
        // with zero commands.
        let basis = MotionBasis::new(&config.shape).ok();
        let world = WorldState::initial(&config)?;
        let n = config.robot_count();
        Ok(Simulation {
            config,
            basis,
            world,
            schedule,
            next_command: 0,
            last_commands: vec![Vec2::ZERO; n],
            last_actuated: vec![Vec2::ZERO; n],
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// World-frame commanded velocities of the last control cycle.
    pub fn last_commands(&self) -> &[Vec2] {
        &self.last_commands
    }

    pub fn last_actuated(&self) -> &[Vec2] {
        &self.last_actuated
    }

    /// Current desired shape, including any scaling applied so far.
    pub fn current_shape(&self) -> ShapeSpec {
        if self.world.size == 1.0 {
            self.config.shape.clone()
        } else {
            self.config.shape.scaled(self.world.size)
        }
    }

    pub fn is_finished(&self) -> bool {
        self.world.tick as usize >= self.config.tick_count()
    }

    /// Replaces the active motion command, bounded by the configured limits.
    pub fn set_command(&mut self, command: MotionCommand) -> Result<MotionCommand> {
        if !command.is_finite() {
            return Err(Error::NonFinite(format!("motion command {command:?}")));
        }
        let command = command.clamped(&self.config.motion_limits);
        if !command.is_zero() {
            if self.basis.is_none() {
                // Reports why the basis could not be built.
                MotionBasis::new(&self.config.shape)?;
            }
            crate::motion::solve_motion_parameters(&self.config.shape, &command)?;
        }
        self.world.command = command;
        Ok(command)
    }

    pub fn set_estimator_enabled(&mut self, enabled: bool) -> Result<()> {
        if enabled {
            validate_estimation_assignment(
                &self.config.estimator.assignment,
                self.config.shape.graph(),
                &self.config.biases,
            )?;
        }
        self.world.estimator_enabled = enabled;
        Ok(())
    }

    /// Advances one recorded tick and returns the record of its start state.
    pub fn step(&mut self) -> Result<TickRecord> {
        let t_tick = self.world.tick as f64 * self.config.dt;
        self.world.t = t_tick;
        while let Some(c) = self.schedule.get(self.next_command) {
            if c.t > t_tick + 1e-9 * self.config.dt {
                break;
            }
            self.set_command(c.command)?;
            self.next_command += 1;
        }

        let inner_dt = self.config.dt / self.config.substeps as f64;
        let mut record = None;
        for sub in 0..self.config.substeps {
            let t = t_tick + sub as f64 * inner_dt;
            let r = self
                .control_cycle(inner_dt)
                .map_err(|e| Error::FormationBroken { t, source: Box::new(e) })?;
            if record.is_none() {
                record = Some(r);
            }
        }

        self.world.tick += 1;
        self.world.t = self.world.tick as f64 * self.config.dt;
        Ok(record.expect("at least one substep"))
    }

    fn control_cycle(&mut self, dt: f64) -> Result<TickRecord> {
        let shape = self.current_shape();
        let graph = shape.graph();
        let n = graph.robot_count();
        let positions = self.world.positions.clone();
        let c = centroid(&positions);
        let angle = formation_angle(&positions);
        self.world.orient += wrap_angle(angle - self.world.orient);

        // Measurement phase.
        let mut measurements: Vec<Vec<LocalMeasurement>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut own = Vec::with_capacity(graph.incident_edges(i).len());
            for &k in graph.incident_edges(i) {
                let j = graph.edge(k).other(i).expect("incident edge");
                own.push(measure_edge(
                    k,
                    j,
                    positions[i] - positions[j],
                    self.world.headings[i],
                    self.config.biases.get(i, k),
                    &self.config.lidar,
                    &mut self.world.streams[i],
                )?);
            }
            measurements.push(own);
        }

        // Control phase, using estimates from before this cycle's update.
        let params = match (&self.basis, self.world.command.is_zero()) {
            (_, true) => None,
            (Some(basis), false) => Some(basis.combine(&self.world.command.sampled(dt), self.world.size)),
            (None, false) => return Err(Error::NotRigid(self.config.shape.rigidity()?.classification)),
        };
        let mut edges = vec![
            EdgeRecord {
                e_tail: 0.0,
                e_head: 0.0,
                mu_hat: None,
            };
            graph.edge_count()
        ];
        let mut commands = Vec::with_capacity(n);
        for (i, meas) in measurements.iter().enumerate() {
            let est = &self.world.estimators[i];
            let enabled = self.world.estimator_enabled;
            let ctl = robot_control(i, meas, &shape, self.config.control_gain, params.as_ref(), |k| {
                if enabled {
                    est.mu_hat(k)
                } else {
                    None
                }
            })?;
            for (k, e) in ctl.edge_errors {
                if graph.edge(k).tail == i {
                    edges[k].e_tail = e;
                } else {
                    edges[k].e_head = e;
                }
                if enabled {
                    if let Some(m) = est.mu_hat(k) {
                        edges[k].mu_hat = Some(m);
                    }
                }
            }
            commands.push(ctl.velocity.rotated(self.world.headings[i]));
        }

        // Estimator phase.
        if self.world.estimator_enabled {
            for (slot, meas) in self.world.estimators.iter_mut().zip(&measurements) {
                let mut state = slot.clone();
                for m in meas {
                    if state.mu_hat(m.edge).is_some() {
                        state = estimator_step(&state, m, &shape, dt)?.0;
                    }
                }
                *slot = state;
            }
        }

        // Actuation and integration.
        let actuated: Vec<Vec2> = commands
            .iter()
            .map(|u| apply_actuation(*u, &self.config.actuator))
            .collect();
        for (p, u) in self.world.positions.iter_mut().zip(&actuated) {
            *p += *u * dt;
        }
        if self.world.command.scale != 0.0 {
            self.world.size *= (self.world.command.scale * dt).exp();
        }

        let robots = positions
            .iter()
            .zip(commands.iter().zip(&actuated))
            .map(|(p, (u, ua))| RobotRecord {
                x: p.x,
                y: p.y,
                u: u.norm(),
                u_act: ua.norm(),
            })
            .collect();
        self.last_commands = commands;
        self.last_actuated = actuated;
        Ok(TickRecord {
            t: self.world.t,
            robots,
            edges,
            centroid: c,
            orient: self.world.orient,
        })
    }

    /// Runs every remaining tick.
    pub fn run_to_end(&mut self) -> Result<Vec<TickRecord>> {
        let mut records = Vec::with_capacity(self.config.tick_count());
        while !self.is_finished() {
            records.push(self.step()?);
        }
        Ok(records)
    }
}

/// One deterministic run of `config` under `schedule`.
pub fn run(config: &SimConfig, schedule: &[ScheduledCommand]) -> Result<Vec<TickRecord>> {
    Simulation::with_schedule(config.clone(), schedule.to_vec())?.run_to_end()
}
