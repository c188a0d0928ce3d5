//! Neighbor graphs, desired shapes and infinitesimal rigidity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, Vec2};

pub type RobotId = usize;
pub type EdgeId = usize;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// Smallest singular value (meters) of the centered positions below which a
/// placement is collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-9;
/// Allowed mismatch between a desired distance and its reference realization.
pub const SHAPE_TOLERANCE: f64 = 1e-9;

/// An ordered edge `(tail, head)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Edge {
    pub tail: RobotId,
    pub head: RobotId,
}

impl Edge {
    pub fn new(tail: RobotId, head: RobotId) -> Self {
        Edge { tail, head }
    }

    pub fn contains(&self, robot: RobotId) -> bool {
        self.tail == robot || self.head == robot
    }

    /// The endpoint opposite to `robot`, if `robot` is an endpoint.
    pub fn other(&self, robot: RobotId) -> Option<RobotId> {
        if robot == self.tail {
            Some(self.head)
        } else if robot == self.head {
            Some(self.tail)
        } else {
            None
        }
    }
}

impl From<[usize; 2]> for Edge {
    fn from(e: [usize; 2]) -> Self {
        Edge::new(e[0], e[1])
    }
}

impl From<Edge> for [usize; 2] {
    fn from(e: Edge) -> Self {
        [e.tail, e.head]
    }
}

/// Undirected neighbor graph with an ordered edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    edges: Vec<Edge>,
    incident: Vec<Vec<EdgeId>>,
}

impl FormationGraph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 robots, got {n}")));
        }
        let mut incident = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            if e.tail >= n || e.head >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} = ({}, {}) references a robot >= {n}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} is a self-edge on robot {}",
                    e.tail
                )));
            }
            if let Some(j) = edges[..k]
                .iter()
                .position(|f| (f.tail == e.tail && f.head == e.head) || (f.tail == e.head && f.head == e.tail))
            {
                return Err(Error::InvalidGraph(format!("edge {k} duplicates edge {j}")));
            }
            incident[e.tail].push(k);
            incident[e.head].push(k);
        }
        Ok(FormationGraph { n, edges, incident })
    }

    pub fn from_pairs(n: usize, pairs: &[(RobotId, RobotId)]) -> Result<Self> {
        Self::new(n, pairs.iter().map(|&(t, h)| Edge::new(t, h)).collect())
    }

    pub fn robot_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: EdgeId) -> Edge {
        self.edges[k]
    }

    /// Edges incident to `robot`, in edge order.
    pub fn incident_edges(&self, robot: RobotId) -> &[EdgeId] {
        &self.incident[robot]
    }

    pub fn neighbors(&self, robot: RobotId) -> impl Iterator<Item = RobotId> + '_ {
        self.incident[robot]
            .iter()
            .filter_map(move |&k| self.edges[k].other(robot))
    }

    /// Incidence matrix: `+1` at the tail and `-1` at the head of every column.
    pub fn incidence(&self) -> DMatrix<i8> {
        let mut b = DMatrix::zeros(self.n, self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            b[(e.tail, k)] = 1;
            b[(e.head, k)] = -1;
        }
        b
    }
}

/// Incidence matrix of `graph`.
pub fn build_incidence(graph: &FormationGraph) -> DMatrix<i8> {
    graph.incidence()
}

/// Per-edge relative positions `z_k = p_tail - p_head`.
pub fn relative_positions(positions: &[Vec2], graph: &FormationGraph) -> Result<Vec<Vec2>> {
    check_len(graph.robot_count(), positions.len())?;
    Ok(graph
        .edges()
        .iter()
        .map(|e| positions[e.tail] - positions[e.head])
        .collect())
}

/// Rigidity matrix, one row per edge, `2n` columns.
pub fn rigidity_matrix(positions: &[Vec2], graph: &FormationGraph) -> Result<DMatrix<f64>> {
    let z = relative_positions(positions, graph)?;
    let mut r = DMatrix::zeros(graph.edge_count(), 2 * graph.robot_count());
    for (k, (e, zk)) in graph.edges().iter().zip(&z).enumerate() {
        if zk.norm() == 0.0 {
            return Err(Error::Degenerate(format!(
                "edge {k} joins coincident robots {} and {}",
                e.tail, e.head
            )));
        }
        r[(k, 2 * e.tail)] = zk.x;
        r[(k, 2 * e.tail + 1)] = zk.y;
        r[(k, 2 * e.head)] = -zk.x;
        r[(k, 2 * e.head + 1)] = -zk.y;
    }
    Ok(r)
}

/// Numerical rank: singular values above `RANK_TOLERANCE * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RigidityClass {
    InfinitesimallyRigid,
    Flexible,
    DegenerateCollinear,
}

impl std::fmt::Display for RigidityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RigidityClass::InfinitesimallyRigid => "infinitesimally-rigid",
            RigidityClass::Flexible => "flexible",
            RigidityClass::DegenerateCollinear => "degenerate-collinear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub rank: usize,
    /// `2n - rank`.
    pub dof: usize,
    pub classification: RigidityClass,
}

impl RigidityReport {
    pub fn is_rigid(&self) -> bool {
        self.classification == RigidityClass::InfinitesimallyRigid
    }
}

/// Classifies a framework by the rank of its rigidity matrix.
///
/// Two robots joined by an edge count as infinitesimally rigid; for three or
/// more robots a collinear placement is reported as degenerate regardless of
/// rank.
pub fn check_infinitesimal_rigidity(positions: &[Vec2], graph: &FormationGraph) -> Result<RigidityReport> {
    let n = graph.robot_count();
    let r = rigidity_matrix(positions, graph)?;
    let rank = numerical_rank(&r);
    let dof = 2 * n - rank;
    let classification = if n >= 3 && is_collinear(positions) {
        RigidityClass::DegenerateCollinear
    } else if rank == 2 * n - 3 {
        RigidityClass::InfinitesimallyRigid
    } else {
        RigidityClass::Flexible
    };
    Ok(RigidityReport {
        rank,
        dof,
        classification,
    })
}

/// True when the smallest singular value of the centered position matrix is
/// below `COLLINEAR_TOLERANCE`.
pub fn is_collinear(positions: &[Vec2]) -> bool {
    if positions.len() < 3 {
        return true;
    }
    let c = centroid(positions);
    let m = DMatrix::from_fn(positions.len(), 2, |i, j| {
        let d = positions[i] - c;
        if j == 0 {
            d.x
        } else {
            d.y
        }
    });
    m.singular_values().min() < COLLINEAR_TOLERANCE
}

/// `e_k = ||z_k|| - d_k`.
pub fn distance_errors(z: &[Vec2], d: &[f64]) -> Result<Vec<f64>> {
    check_len(d.len(), z.len())?;
    Ok(z.iter().zip(d).map(|(zk, dk)| zk.norm() - dk).collect())
}

/// `V = 1/2 sum_k (||z_k|| - d_k)^2`.
pub fn potential(z: &[Vec2], d: &[f64]) -> Result<f64> {
    Ok(0.5 * distance_errors(z, d)?.iter().map(|e| e * e).sum::<f64>())
}

/// Desired inter-robot distances together with one realization of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    graph: FormationGraph,
    desired_distances: Vec<f64>,
    reference_positions: Vec<Vec2>,
}

impl ShapeSpec {
    pub fn new(graph: FormationGraph, desired_distances: Vec<f64>, reference_positions: Vec<Vec2>) -> Result<Self> {
        check_len(graph.robot_count(), reference_positions.len())?;
        check_len(graph.edge_count(), desired_distances.len())?;
        if let Some(p) = reference_positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("reference position {p:?}")));
        }
        for (k, (e, &d)) in graph.edges().iter().zip(&desired_distances).enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidShape(format!(
                    "desired distance of edge {k} must be positive, got {d}"
                )));
            }
            let actual = reference_positions[e.tail].distance(reference_positions[e.head]);
            if (actual - d).abs() > SHAPE_TOLERANCE {
                return Err(Error::InvalidShape(format!(
                    "edge {k}: reference positions are {actual} m apart but desired distance is {d} m"
                )));
            }
        }
        Ok(ShapeSpec {
            graph,
            desired_distances,
            reference_positions,
        })
    }

    /// Takes the desired distances from the reference realization.
    pub fn from_reference(graph: FormationGraph, reference_positions: Vec<Vec2>) -> Result<Self> {
        check_len(graph.robot_count(), reference_positions.len())?;
        let d = graph
            .edges()
            .iter()
            .map(|e| reference_positions[e.tail].distance(reference_positions[e.head]))
            .collect();
        Self::new(graph, d, reference_positions)
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.graph
    }

    pub fn desired_distances(&self) -> &[f64] {
        &self.desired_distances
    }

    pub fn desired_distance(&self, k: EdgeId) -> f64 {
        self.desired_distances[k]
    }

    pub fn reference_positions(&self) -> &[Vec2] {
        &self.reference_positions
    }

    pub fn reference_centroid(&self) -> Vec2 {
        centroid(&self.reference_positions)
    }

    /// Same shape with every distance multiplied by `factor`, scaled about the
    /// reference centroid.
    pub fn scaled(&self, factor: f64) -> ShapeSpec {
        let c = self.reference_centroid();
        ShapeSpec {
            graph: self.graph.clone(),
            desired_distances: self.desired_distances.iter().map(|d| d * factor).collect(),
            reference_positions: self.reference_positions.iter().map(|p| c + (*p - c) * factor).collect(),
        }
    }

    pub fn rigidity(&self) -> Result<RigidityReport> {
        check_infinitesimal_rigidity(&self.reference_positions, &self.graph)
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

/// The four-robot graph used throughout: a square with one diagonal.
pub fn square_with_diagonal() -> FormationGraph {
    FormationGraph::from_pairs(4, &[(0, 1), (1, 2), (1, 3), (0, 3), (2, 3)]).expect("static graph is valid")
}

/// Unit square corners, counter-clockwise from the origin.
pub fn unit_square() -> Vec<Vec2> {
    vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ]
}
