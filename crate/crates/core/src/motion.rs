//! Operator motion commands and the per-edge motion parameters that realize them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{EdgeId, RobotId, ShapeSpec};
use crate::geometry::Vec2;

/// Residual (m/s) below which a robot's target velocity counts as realized.
pub const REALIZABILITY_TOLERANCE: f64 = 1e-9;

/// Rigid-body motion request in the frame fixed to the desired shape.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "FlatCommand", into = "FlatCommand")]
pub struct MotionCommand {
    /// Translation velocity, m/s.
    pub v: Vec2,
    /// Angular rate about the shape centroid, rad/s.
    pub omega: f64,
    /// Scaling rate, 1/s.
    pub scale: f64,
}

/// Serialized form: `{"vx", "vy", "omega", "scale"}`, all optional.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FlatCommand {
    vx: f64,
    vy: f64,
    omega: f64,
    scale: f64,
}

impl From<FlatCommand> for MotionCommand {
    fn from(f: FlatCommand) -> Self {
        MotionCommand {
            v: Vec2::new(f.vx, f.vy),
            omega: f.omega,
            scale: f.scale,
        }
    }
}

impl From<MotionCommand> for FlatCommand {
    fn from(c: MotionCommand) -> Self {
        FlatCommand {
            vx: c.v.x,
            vy: c.v.y,
            omega: c.omega,
            scale: c.scale,
        }
    }
}

impl MotionCommand {
    pub const ZERO: MotionCommand = MotionCommand {
        v: Vec2::ZERO,
        omega: 0.0,
        scale: 0.0,
    };

    pub fn new(v: Vec2, omega: f64, scale: f64) -> Result<Self> {
        let cmd = MotionCommand { v, omega, scale };
        if cmd.is_finite() {
            Ok(cmd)
        } else {
            Err(Error::NonFinite(format!("motion command {cmd:?}")))
        }
    }

    pub fn translation(vx: f64, vy: f64) -> Self {
        MotionCommand {
            v: Vec2::new(vx, vy),
            ..Self::ZERO
        }
    }

    pub fn rotation(omega: f64) -> Self {
        MotionCommand { omega, ..Self::ZERO }
    }

    pub fn scaling(scale: f64) -> Self {
        MotionCommand { scale, ..Self::ZERO }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite() && self.scale.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.v == Vec2::ZERO && self.omega == 0.0 && self.scale == 0.0
    }

    /// Velocity of a point at `offset` from the shape centroid.
    pub fn velocity_at(&self, offset: Vec2) -> Vec2 {
        self.v + offset.perp() * self.omega + offset * self.scale
    }

    /// Bounds every component by `limits`, keeping the translation direction.
    pub fn clamped(&self, limits: &MotionLimits) -> MotionCommand {
        let speed = self.v.norm();
        let v = if speed > limits.max_speed {
            self.v * (limits.max_speed / speed)
        } else {
            self.v
        };
        MotionCommand {
            v,
            omega: self.omega.clamp(-limits.max_omega, limits.max_omega),
            scale: self.scale.clamp(-limits.max_scale, limits.max_scale),
        }
    }

    /// Command whose explicit-Euler velocity field over one control period of
    /// length `dt` carries the shape exactly through the rotation `omega * dt`
    /// and scaling `exp(scale * dt)`.
    pub fn sampled(&self, dt: f64) -> MotionCommand {
        if self.omega == 0.0 && self.scale == 0.0 {
            return *self;
        }
        let growth = (self.scale * dt).exp();
        let (sin, cos) = (self.omega * dt).sin_cos();
        MotionCommand {
            v: self.v,
            omega: growth * sin / dt,
            scale: (growth * cos - 1.0) / dt,
        }
    }
}

impl std::ops::Add for MotionCommand {
    type Output = MotionCommand;
    fn add(self, rhs: MotionCommand) -> MotionCommand {
        MotionCommand {
            v: self.v + rhs.v,
            omega: self.omega + rhs.omega,
            scale: self.scale + rhs.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionLimits {
    pub max_speed: f64,
    pub max_omega: f64,
    pub max_scale: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits {
            max_speed: 1.0,
            max_omega: 1.0,
            max_scale: 0.2,
        }
    }
}

/// One coefficient per (robot, incident edge) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionParameters {
    per_robot: Vec<Vec<(EdgeId, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEntry {
    pub robot: RobotId,
    pub edge: EdgeId,
    pub sigma: f64,
}

impl MotionParameters {
    /// All-zero parameters supported on every (robot, incident edge) pair.
    pub fn zeros(shape: &ShapeSpec) -> Self {
        let g = shape.graph();
        MotionParameters {
            per_robot: (0..g.robot_count())
                .map(|i| g.incident_edges(i).iter().map(|&k| (k, 0.0)).collect())
                .collect(),
        }
    }

    pub fn robot_count(&self) -> usize {
        self.per_robot.len()
    }

    /// `(edge, sigma)` pairs for one robot in incident-edge order.
    pub fn for_robot(&self, robot: RobotId) -> &[(EdgeId, f64)] {
        &self.per_robot[robot]
    }

    pub fn get(&self, robot: RobotId, edge: EdgeId) -> Option<f64> {
        self.per_robot
            .get(robot)?
            .iter()
            .find(|(k, _)| *k == edge)
            .map(|(_, s)| *s)
    }

    pub fn entries(&self) -> impl Iterator<Item = SigmaEntry> + '_ {
        self.per_robot
            .iter()
            .enumerate()
            .flat_map(|(robot, row)| row.iter().map(move |&(edge, sigma)| SigmaEntry { robot, edge, sigma }))
    }

    pub fn is_zero(&self) -> bool {
        self.entries().all(|e| e.sigma == 0.0)
    }

    fn same_support(&self, other: &MotionParameters) -> bool {
        self.per_robot.len() == other.per_robot.len()
            && self
                .per_robot
                .iter()
                .zip(&other.per_robot)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0))
    }

    /// Entrywise sum; both operands must cover the same pairs.
    pub fn try_add(&self, other: &MotionParameters) -> Result<MotionParameters> {
        if !self.same_support(other) {
            return Err(Error::SupportMismatch(
                "operands cover different (robot, edge) pairs".into(),
            ));
        }
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn scaled(&self, factor: f64) -> MotionParameters {
        MotionParameters {
            per_robot: self
                .per_robot
                .iter()
                .map(|row| row.iter().map(|&(k, s)| (k, s * factor)).collect())
                .collect(),
        }
    }

    /// `self + factor * other`, assuming equal support.
    pub(crate) fn add_scaled(&self, other: &MotionParameters, factor: f64) -> MotionParameters {
        self.zip_with(other, |a, b| a + factor * b)
    }

    fn zip_with(&self, other: &MotionParameters, f: impl Fn(f64, f64) -> f64) -> MotionParameters {
        MotionParameters {
            per_robot: self
                .per_robot
                .iter()
                .zip(&other.per_robot)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.0, f(x.1, y.1))).collect())
                .collect(),
        }
    }
}

/// Parameters plus the per-robot least-squares residuals they leave.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSolution {
    pub parameters: MotionParameters,
    pub residuals: Vec<f64>,
}

impl MotionSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Least-squares fit without the realizability check.
///
/// For robot `i` the columns are the unit vectors from each neighbor towards
/// `i` at the reference positions, and the target is the rigid-body velocity
/// `cmd.velocity_at(p*_i - c*)`. The minimum-norm solution is used when a
/// robot has more than two neighbors, which keeps the map linear in `cmd`.
pub fn fit_motion_parameters(shape: &ShapeSpec, cmd: &MotionCommand) -> Result<MotionSolution> {
    let g = shape.graph();
    let p = shape.reference_positions();
    let c = shape.reference_centroid();
    let mut per_robot = Vec::with_capacity(g.robot_count());
    let mut residuals = Vec::with_capacity(g.robot_count());
    for i in 0..g.robot_count() {
        let edges = g.incident_edges(i);
        let target = cmd.velocity_at(p[i] - c);
        if edges.is_empty() {
            per_robot.push(Vec::new());
            residuals.push(target.norm());
            continue;
        }
        let mut a = DMatrix::zeros(2, edges.len());
        for (col, &k) in edges.iter().enumerate() {
            let j = g.edge(k).other(i).expect("incident edge");
            let unit = (p[i] - p[j])
                .normalized()
                .ok_or_else(|| Error::Degenerate(format!("edge {k} has coincident reference positions")))?;
            a[(0, col)] = unit.x;
            a[(1, col)] = unit.y;
        }
        let b = DVector::from_vec(vec![target.x, target.y]);
        let pinv = a
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        let sigma = &pinv * &b;
        let fitted = &a * &sigma;
        residuals.push((fitted - b).norm());
        per_robot.push(edges.iter().zip(sigma.iter()).map(|(&k, &s)| (k, s)).collect());
    }
    Ok(MotionSolution {
        parameters: MotionParameters { per_robot },
        residuals,
    })
}

/// Motion parameters realizing `cmd` on an infinitesimally rigid shape.
pub fn solve_motion_parameters(shape: &ShapeSpec, cmd: &MotionCommand) -> Result<MotionSolution> {
    if !cmd.is_finite() {
        return Err(Error::NonFinite(format!("motion command {cmd:?}")));
    }
    let report = shape.rigidity()?;
    if !report.is_rigid() {
        return Err(Error::NotRigid(report.classification));
    }
    let solution = fit_motion_parameters(shape, cmd)?;
    if let Some((robot, &residual)) = solution
        .residuals
        .iter()
        .enumerate()
        .find(|(_, r)| **r >= REALIZABILITY_TOLERANCE)
    {
        return Err(Error::UnrealizableMotion {
            robot,
            residual,
            tolerance: REALIZABILITY_TOLERANCE,
        });
    }
    Ok(solution)
}

/// Velocity each robot gets from the motion term alone at the reference shape.
pub fn reconstruct_velocities(shape: &ShapeSpec, params: &MotionParameters) -> Vec<Vec2> {
    let g = shape.graph();
    let p = shape.reference_positions();
    (0..g.robot_count())
        .map(|i| {
            params.for_robot(i).iter().fold(Vec2::ZERO, |acc, &(k, s)| {
                let j = g.edge(k).other(i).expect("incident edge");
                acc + (p[i] - p[j]).normalized().unwrap_or(Vec2::ZERO) * s
            })
        })
        .collect()
}

/// Parameters for the four unit commands; any command is a linear
/// combination of them.
#[derive(Debug, Clone)]
pub struct MotionBasis {
    pub translate_x: MotionParameters,
    pub translate_y: MotionParameters,
    pub rotate: MotionParameters,
    pub scale: MotionParameters,
}

impl MotionBasis {
    pub fn new(shape: &ShapeSpec) -> Result<Self> {
        Ok(MotionBasis {
            translate_x: solve_motion_parameters(shape, &MotionCommand::translation(1.0, 0.0))?.parameters,
            translate_y: solve_motion_parameters(shape, &MotionCommand::translation(0.0, 1.0))?.parameters,
            rotate: solve_motion_parameters(shape, &MotionCommand::rotation(1.0))?.parameters,
            scale: solve_motion_parameters(shape, &MotionCommand::scaling(1.0))?.parameters,
        })
    }

    /// Parameters for `cmd` on the reference shape enlarged by `size`.
    ///
    /// Rotation and scaling fields grow linearly with the shape; translation
    /// does not.
    pub fn combine(&self, cmd: &MotionCommand, size: f64) -> MotionParameters {
        self.translate_x
            .scaled(cmd.v.x)
            .add_scaled(&self.translate_y, cmd.v.y)
            .add_scaled(&self.rotate, cmd.omega * size)
            .add_scaled(&self.scale, cmd.scale * size)
    }
}
