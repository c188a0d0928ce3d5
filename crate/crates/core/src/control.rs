//! Per-robot control laws computed from local range/bearing readings only.
//!
//! Every function here takes the measurements of a single robot. Nothing
//! reads another robot's state, so the laws can run unchanged on each
//! robot's own controller.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{EdgeId, FormationGraph, RobotId, ShapeSpec};
use crate::geometry::Vec2;
use crate::motion::MotionParameters;
use crate::sensor::BiasTable;

/// A neighbor reading expressed in the measuring robot's own frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMeasurement {
    pub edge: EdgeId,
    pub neighbor: RobotId,
    /// Sensed distance, meters. May include bias and noise.
    pub range: f64,
    /// Direction from the neighbor towards the measuring robot, radians in
    /// `(-pi, pi]`, local frame.
    pub bearing: f64,
}

impl LocalMeasurement {
    /// Unit vector along the measured bearing.
    pub fn unit(&self) -> Vec2 {
        Vec2::from_polar(1.0, self.bearing)
    }
}

/// Error signal and velocity contribution of one edge.
fn edge_term(m: &LocalMeasurement, desired: f64, mu_hat: f64) -> (f64, Vec2) {
    let error = m.range - desired - mu_hat;
    (error, -(m.unit() * error))
}

/// Output of the full per-robot law.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotControl {
    /// Local-frame velocity command, m/s.
    pub velocity: Vec2,
    /// Control error signal per incident edge, after bias compensation.
    pub edge_errors: Vec<(EdgeId, f64)>,
}

/// Gradient term scaled by `gain`, plus the motion term when `params` is
/// given. `mu_hat` yields the bias estimate this robot holds for an edge.
pub fn robot_control(
    robot: RobotId,
    measurements: &[LocalMeasurement],
    shape: &ShapeSpec,
    gain: f64,
    params: Option<&MotionParameters>,
    mu_hat: impl Fn(EdgeId) -> Option<f64>,
) -> Result<RobotControl> {
    let graph = shape.graph();
    if let Some(m) = measurements
        .iter()
        .find(|m| m.edge >= graph.edge_count() || !graph.edge(m.edge).contains(robot))
    {
        return Err(Error::ForeignMeasurement { robot, edge: m.edge });
    }
    let mut velocity = Vec2::ZERO;
    let mut edge_errors = Vec::with_capacity(graph.incident_edges(robot).len());
    for &k in graph.incident_edges(robot) {
        let m = measurements
            .iter()
            .find(|m| m.edge == k)
            .ok_or(Error::MissingMeasurement { robot, edge: k })?;
        let (error, term) = edge_term(m, shape.desired_distance(k), mu_hat(k).unwrap_or(0.0));
        velocity += term * gain;
        if let Some(sigma) = params.and_then(|p| p.get(robot, k)) {
            velocity += m.unit() * sigma;
        }
        edge_errors.push((k, error));
    }
    Ok(RobotControl { velocity, edge_errors })
}

/// `u_i = -sum_k zhat_k (range_k - d_k)`, in the robot's local frame.
pub fn gradient_control(robot: RobotId, measurements: &[LocalMeasurement], shape: &ShapeSpec) -> Result<Vec2> {
    Ok(robot_control(robot, measurements, shape, 1.0, None, |_| None)?.velocity)
}

/// Gradient term plus `sum_k sigma_{i,k} zhat_k`.
pub fn motion_control(
    robot: RobotId,
    measurements: &[LocalMeasurement],
    shape: &ShapeSpec,
    params: &MotionParameters,
) -> Result<Vec2> {
    Ok(robot_control(robot, measurements, shape, 1.0, Some(params), |_| None)?.velocity)
}

/// Which endpoint, if any, estimates the bias of each edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EstimatorAssignment {
    estimators: Vec<Option<RobotId>>,
}

impl EstimatorAssignment {
    pub fn new(estimators: Vec<Option<RobotId>>, graph: &FormationGraph) -> Result<Self> {
        if estimators.len() != graph.edge_count() {
            return Err(Error::LengthMismatch {
                expected: graph.edge_count(),
                actual: estimators.len(),
            });
        }
        for (k, r) in estimators.iter().enumerate() {
            if let Some(r) = *r {
                if !graph.edge(k).contains(r) {
                    return Err(Error::InvalidConfig(format!(
                        "estimator of edge {k} must be one of its endpoints, got robot {r}"
                    )));
                }
            }
        }
        Ok(EstimatorAssignment { estimators })
    }

    pub fn none(graph: &FormationGraph) -> Self {
        EstimatorAssignment {
            estimators: vec![None; graph.edge_count()],
        }
    }

    /// The tail of every edge estimates it.
    pub fn tails(graph: &FormationGraph) -> Self {
        EstimatorAssignment {
            estimators: graph.edges().iter().map(|e| Some(e.tail)).collect(),
        }
    }

    pub fn estimator(&self, edge: EdgeId) -> Option<RobotId> {
        self.estimators.get(edge).copied().flatten()
    }

    pub fn edges_of(&self, robot: RobotId) -> impl Iterator<Item = EdgeId> + '_ {
        self.estimators
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == Some(robot))
            .map(|(k, _)| k)
    }

    pub fn is_empty(&self) -> bool {
        self.estimators.iter().all(Option::is_none)
    }

    pub fn as_slice(&self) -> &[Option<RobotId>] {
        &self.estimators
    }
}

/// A directed loop `robots[0] -> robots[1] -> ... -> robots[0]` in the
/// estimation graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationCycle {
    pub robots: Vec<RobotId>,
}

impl fmt::Display for EstimationCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.robots {
            write!(f, "{r} -> ")?;
        }
        match self.robots.first() {
            Some(r) => write!(f, "{r}"),
            None => Ok(()),
        }
    }
}

/// Accepts the assignment iff the graph with an arrow from each estimating
/// robot to the opposite endpoint of its edge has no directed cycle.
pub fn validate_estimation_assignment(
    assignment: &EstimatorAssignment,
    graph: &FormationGraph,
    biases: &BiasTable,
) -> Result<()> {
    for b in biases.entries() {
        if b.mu != 0.0 && assignment.estimator(b.edge).is_none() {
            return Err(Error::UnassignedBiasedEdge { edge: b.edge });
        }
    }
    let n = graph.robot_count();
    let mut successors = vec![Vec::new(); n];
    for (k, r) in assignment.as_slice().iter().enumerate() {
        if let Some(r) = *r {
            successors[r].push(graph.edge(k).other(r).expect("validated endpoint"));
        }
    }
    match find_cycle(&successors) {
        Some(robots) => Err(Error::EstimationCycle(EstimationCycle { robots })),
        None => Ok(()),
    }
}

fn find_cycle(successors: &[Vec<RobotId>]) -> Option<Vec<RobotId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = successors.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // Path of (node, next successor index).
        let mut path: Vec<(RobotId, usize)> = vec![(root, 0)];
        mark[root] = Mark::Open;
        while let Some(&mut (node, ref mut next)) = path.last_mut() {
            if let Some(&succ) = successors[node].get(*next) {
                *next += 1;
                match mark[succ] {
                    Mark::New => {
                        mark[succ] = Mark::Open;
                        path.push((succ, 0));
                    }
                    Mark::Open => {
                        let start = path.iter().position(|(r, _)| *r == succ).expect("open node is on path");
                        return Some(path[start..].iter().map(|(r, _)| *r).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                path.pop();
            }
        }
    }
    None
}

/// Bias estimates held by one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub robot: RobotId,
    /// Estimator gain `c`, 1/s.
    pub gain: f64,
    /// `(edge, mu_hat)` for each edge this robot estimates.
    pub estimates: Vec<(EdgeId, f64)>,
}

impl EstimatorState {
    /// Zero estimates for every edge `assignment` gives to `robot`.
    pub fn new(robot: RobotId, gain: f64, assignment: &EstimatorAssignment) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "estimator gain must be positive, got {gain}"
            )));
        }
        Ok(EstimatorState {
            robot,
            gain,
            estimates: assignment.edges_of(robot).map(|k| (k, 0.0)).collect(),
        })
    }

    pub fn mu_hat(&self, edge: EdgeId) -> Option<f64> {
        self.estimates.iter().find(|(k, _)| *k == edge).map(|(_, m)| *m)
    }
}

/// One explicit-Euler step of the bias estimator for a single edge.
///
/// Returns the advanced state and this edge's compensated control term
/// `-zhat (range - d - mu_hat)`, evaluated with the estimate from before the
/// update.
pub fn estimator_step(
    state: &EstimatorState,
    measurement: &LocalMeasurement,
    shape: &ShapeSpec,
    dt: f64,
) -> Result<(EstimatorState, Vec2)> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let edge = measurement.edge;
    let slot = state
        .estimates
        .iter()
        .position(|(k, _)| *k == edge)
        .ok_or(Error::NotAssigned {
            robot: state.robot,
            edge,
        })?;
    let mu_hat = state.estimates[slot].1;
    let (error, term) = edge_term(measurement, shape.desired_distance(edge), mu_hat);
    let mut next = state.clone();
    next.estimates[slot].1 = mu_hat + state.gain * error * dt;
    Ok((next, term))
}

/// Closed-form steady state of two robots joined by one edge whose tail
/// reads every range `mu` too long, both under the unit-gain gradient law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasedPairReport {
    /// Common speed of both robots, m/s.
    pub drift_speed: f64,
    /// Common velocity; along `-zhat` for positive bias.
    pub drift_velocity: Vec2,
    /// True distance minus desired distance, meters.
    pub equilibrium_error: f64,
    /// Error the biased robot senses.
    pub biased_side_error: f64,
    /// Error the unbiased robot senses.
    pub unbiased_side_error: f64,
}

/// With `e` the true distance error, the edge obeys
/// `de/dt = -(2e + mu)`, so `e -> -mu/2`, and each robot then moves with
/// velocity `-zhat mu/2`.
pub fn biased_pair_dynamics(mu: f64, d: f64, z0: Vec2) -> Result<BiasedPairReport> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::InvalidShape(format!(
            "desired distance must be positive, got {d}"
        )));
    }
    let zhat = z0
        .normalized()
        .ok_or_else(|| Error::Degenerate("initial relative position is zero".into()))?;
    let e = -mu / 2.0;
    Ok(BiasedPairReport {
        drift_speed: mu.abs() / 2.0,
        drift_velocity: -(zhat * (mu / 2.0)),
        equilibrium_error: e,
        biased_side_error: e + mu,
        unbiased_side_error: e,
    })
}

/// Entrywise sum of translation and rotation parameter sets.
pub fn compose_sigma(t1: &MotionParameters, t2: &MotionParameters, r: &MotionParameters) -> Result<MotionParameters> {
    t1.try_add(t2)?.try_add(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::{square_with_diagonal, unit_square};
    use crate::geometry::Vec2;

    fn meas(edge: EdgeId, neighbor: RobotId, range: f64, bearing: f64) -> LocalMeasurement {
        LocalMeasurement {
            edge,
            neighbor,
            range,
            bearing,
        }
    }

    fn pair_shape() -> ShapeSpec {
        let g = FormationGraph::from_pairs(2, &[(0, 1)]).unwrap();
        ShapeSpec::from_reference(g, vec![Vec2::new(1.0, 0.0), Vec2::ZERO]).unwrap()
    }

    #[test]
    fn single_edge_arithmetic() {
        let u = gradient_control(0, &[meas(0, 1, 1.1, 0.0)], &pair_shape()).unwrap();
        assert!((u - Vec2::new(-0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn desired_ranges_give_zero_control() {
        let shape = ShapeSpec::from_reference(square_with_diagonal(), unit_square()).unwrap();
        let ms = [
            meas(0, 0, 1.0, 0.0),
            meas(1, 2, 1.0, 1.0),
            meas(2, 3, 2f64.sqrt(), -2.0),
        ];
        assert_eq!(gradient_control(1, &ms, &shape).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn missing_and_foreign_measurements() {
        let shape = ShapeSpec::from_reference(square_with_diagonal(), unit_square()).unwrap();
        let err = gradient_control(1, &[meas(0, 0, 1.0, 0.0)], &shape).unwrap_err();
        assert!(matches!(err, Error::MissingMeasurement { robot: 1, edge: 1 }));
        let err = gradient_control(0, &[meas(1, 2, 1.0, 0.0)], &shape).unwrap_err();
        assert!(matches!(err, Error::ForeignMeasurement { robot: 0, edge: 1 }));
    }

    #[test]
    fn zero_parameters_reduce_to_gradient() {
        let shape = pair_shape();
        let ms = [meas(0, 1, 1.3, 0.4)];
        let p = MotionParameters::zeros(&shape);
        assert_eq!(
            motion_control(0, &ms, &shape, &p).unwrap(),
            gradient_control(0, &ms, &shape).unwrap()
        );
    }

    #[test]
    fn estimator_fixed_point() {
        let shape = pair_shape();
        let assignment = EstimatorAssignment::tails(shape.graph());
        let mut state = EstimatorState::new(0, 1.0, &assignment).unwrap();
        state.estimates[0].1 = 0.006;
        let (next, u) = estimator_step(&state, &meas(0, 1, 1.006, 0.3), &shape, 0.2).unwrap();
        assert!(u.norm() < 1e-15);
        assert!((next.estimates[0].1 - 0.006).abs() < 1e-15);
    }

    #[test]
    fn estimator_rejects_unassigned_edge() {
        let shape = pair_shape();
        let state = EstimatorState::new(1, 1.0, &EstimatorAssignment::tails(shape.graph())).unwrap();
        let err = estimator_step(&state, &meas(0, 0, 1.0, 0.0), &shape, 0.2).unwrap_err();
        assert!(matches!(err, Error::NotAssigned { robot: 1, edge: 0 }));
    }

    #[test]
    fn biased_pair_closed_form() {
        let r = biased_pair_dynamics(0.0, 1.0, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!((r.drift_speed, r.equilibrium_error), (0.0, 0.0));
        let r = biased_pair_dynamics(0.006, 1.0, Vec2::new(1.0, 0.0)).unwrap();
        assert!((r.drift_speed - 0.003).abs() < 1e-15);
        assert!((r.drift_velocity - Vec2::new(-0.003, 0.0)).norm() < 1e-15);
        assert!((r.biased_side_error - r.unbiased_side_error - 0.006).abs() < 1e-15);
        let flipped = biased_pair_dynamics(-0.006, 1.0, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(flipped.drift_velocity, -r.drift_velocity);
        assert!(biased_pair_dynamics(0.006, 0.0, Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn small_assignments() {
        let pair = FormationGraph::from_pairs(2, &[(0, 1)]).unwrap();
        let a = EstimatorAssignment::new(vec![Some(0)], &pair).unwrap();
        assert!(validate_estimation_assignment(&a, &pair, &BiasTable::default()).is_ok());

        let tri = FormationGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let a = EstimatorAssignment::tails(&tri);
        match validate_estimation_assignment(&a, &tri, &BiasTable::default()) {
            Err(Error::EstimationCycle(c)) => {
                let mut robots = c.robots.clone();
                robots.sort();
                assert_eq!(robots, vec![0, 1, 2]);
            }
            other => panic!("expected a cycle, got {other:?}"),
        }
    }

    #[test]
    fn biased_edge_needs_an_estimator() {
        let g = square_with_diagonal();
        let biases = BiasTable::single(0, 0, 0.006, &g).unwrap();
        let err = validate_estimation_assignment(&EstimatorAssignment::none(&g), &g, &biases).unwrap_err();
        assert!(matches!(err, Error::UnassignedBiasedEdge { edge: 0 }));
    }

    #[test]
    fn assignment_must_use_endpoints() {
        let g = square_with_diagonal();
        assert!(EstimatorAssignment::new(vec![Some(2), None, None, None, None], &g).is_err());
        assert!(EstimatorAssignment::new(vec![None; 4], &g).is_err());
    }
}
