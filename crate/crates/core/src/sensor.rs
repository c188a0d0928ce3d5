//! Range/bearing sensing with bias, noise and outliers, and the actuator
//! deadband.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::LocalMeasurement;
use crate::error::{Error, Result};
use crate::formation::{EdgeId, FormationGraph, RobotId};
use crate::geometry::{wrap_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    /// Range noise standard deviation as a fraction of the true distance.
    pub accuracy_fraction: f64,
    /// Meters.
    pub max_range: f64,
    /// Seconds per full sweep.
    pub scan_period: f64,
    /// Radians; bearing noise std is half of this.
    pub angular_resolution: f64,
    /// Probability per measurement of an outlier.
    pub spike_probability: f64,
    /// Outliers are uniform in `[-spike_offset_range, spike_offset_range]` meters.
    pub spike_offset_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        LidarSpec {
            accuracy_fraction: 0.002,
            max_range: 6.0,
            scan_period: 0.2,
            angular_resolution: 1f64.to_radians(),
            spike_probability: 0.01,
            spike_offset_range: 0.1,
        }
    }
}

impl LidarSpec {
    /// Default range and period with every noise channel switched off.
    pub fn noiseless() -> Self {
        LidarSpec {
            accuracy_fraction: 0.0,
            angular_resolution: 0.0,
            spike_probability: 0.0,
            spike_offset_range: 0.0,
            ..Default::default()
        }
    }

    pub fn bearing_std(&self) -> f64 {
        self.angular_resolution / 2.0
    }

    pub fn is_noiseless(&self) -> bool {
        self.accuracy_fraction == 0.0
            && self.angular_resolution == 0.0
            && (self.spike_probability == 0.0 || self.spike_offset_range == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("accuracy_fraction", self.accuracy_fraction),
            ("max_range", self.max_range),
            ("scan_period", self.scan_period),
            ("angular_resolution", self.angular_resolution),
            ("spike_probability", self.spike_probability),
            ("spike_offset_range", self.spike_offset_range),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "lidar.{name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        if self.accuracy_fraction >= 1.0 {
            return Err(Error::InvalidConfig("lidar.accuracy_fraction must be < 1".into()));
        }
        if self.spike_probability >= 1.0 {
            return Err(Error::InvalidConfig("lidar.spike_probability must be < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorSpec {
    /// Commands slower than this (m/s) produce no motion.
    pub deadband_speed: f64,
    pub max_speed: f64,
}

impl Default for ActuatorSpec {
    fn default() -> Self {
        ActuatorSpec {
            deadband_speed: 0.015,
            max_speed: 1.0,
        }
    }
}

impl ActuatorSpec {
    /// No deadband, default speed limit.
    pub fn ideal() -> Self {
        ActuatorSpec {
            deadband_speed: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.deadband_speed.is_finite() && self.max_speed.is_finite()) {
            return Err(Error::InvalidConfig("actuator speeds must be finite".into()));
        }
        if !(0.0 <= self.deadband_speed && self.deadband_speed < self.max_speed) {
            return Err(Error::InvalidConfig(format!(
                "actuator requires 0 <= deadband_speed < max_speed, got {} and {}",
                self.deadband_speed, self.max_speed
            )));
        }
        Ok(())
    }
}

/// Velocity the platform actually tracks for a commanded velocity.
///
/// Saturated output may exceed `max_speed` by a few ulps; such vectors are
/// passed through unchanged so applying the model twice is a no-op.
pub fn apply_actuation(cmd: Vec2, spec: &ActuatorSpec) -> Vec2 {
    let speed = cmd.norm();
    if speed < spec.deadband_speed {
        Vec2::ZERO
    } else if speed > spec.max_speed * (1.0 + 8.0 * f64::EPSILON) {
        cmd * (spec.max_speed / speed)
    } else {
        cmd
    }
}

/// Constant range offsets, keyed by the measuring robot and the edge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BiasTable {
    entries: Vec<BiasEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasEntry {
    pub robot: RobotId,
    pub edge: EdgeId,
    /// Meters added to every range this robot reads on this edge.
    pub mu: f64,
}

impl BiasTable {
    pub fn new(entries: Vec<BiasEntry>, graph: &FormationGraph) -> Result<Self> {
        for (idx, b) in entries.iter().enumerate() {
            if b.edge >= graph.edge_count() {
                return Err(Error::InvalidConfig(format!(
                    "bias {idx} references unknown edge {}",
                    b.edge
                )));
            }
            if !graph.edge(b.edge).contains(b.robot) {
                return Err(Error::InvalidConfig(format!(
                    "bias {idx}: robot {} is not an endpoint of edge {}",
                    b.robot, b.edge
                )));
            }
            if !b.mu.is_finite() {
                return Err(Error::NonFinite(format!("bias {idx}")));
            }
            if entries[..idx].iter().any(|o| o.edge == b.edge) {
                return Err(Error::InvalidConfig(format!(
                    "edge {} is biased more than once; only one endpoint may carry its bias",
                    b.edge
                )));
            }
        }
        Ok(BiasTable { entries })
    }

    pub fn single(robot: RobotId, edge: EdgeId, mu: f64, graph: &FormationGraph) -> Result<Self> {
        Self::new(vec![BiasEntry { robot, edge, mu }], graph)
    }

    pub fn get(&self, robot: RobotId, edge: EdgeId) -> f64 {
        self.entries
            .iter()
            .find(|b| b.robot == robot && b.edge == edge)
            .map_or(0.0, |b| b.mu)
    }

    /// Bias of an edge regardless of which endpoint carries it.
    pub fn edge_bias(&self, edge: EdgeId) -> Option<&BiasEntry> {
        self.entries.iter().find(|b| b.edge == edge)
    }

    pub fn entries(&self) -> &[BiasEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(|b| b.mu == 0.0)
    }
}

/// Independent random stream for one robot.
#[derive(Debug, Clone)]
pub struct NoiseStream(ChaCha8Rng);

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseStream(rng)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

/// Substream reserved for mount headings.
pub const HEADING_STREAM: u64 = u64::MAX;

/// Uniform mount angles in `(-pi, pi]`, one per robot.
pub fn seeded_headings(seed: u64, n: usize) -> Vec<f64> {
    let mut s = NoiseStream::new(seed, HEADING_STREAM);
    (0..n)
        .map(|_| wrap_angle((2.0 * s.uniform() - 1.0) * std::f64::consts::PI))
        .collect()
}

/// One range/bearing reading of a neighbor.
///
/// `true_rel` is the world-frame vector from the neighbor to the measuring
/// robot, matching the sign of the control law. Exactly four variates are
/// drawn per call so the stream position does not depend on the outcome.
pub fn measure_edge(
    edge: EdgeId,
    neighbor: RobotId,
    true_rel: Vec2,
    robot_heading: f64,
    bias: f64,
    spec: &LidarSpec,
    rng: &mut NoiseStream,
) -> Result<LocalMeasurement> {
    let distance = true_rel.norm();
    if distance > spec.max_range {
        return Err(Error::OutOfRange {
            edge,
            distance,
            max_range: spec.max_range,
        });
    }
    if distance == 0.0 {
        return Err(Error::Degenerate(format!("edge {edge}: robots coincide")));
    }
    let range_noise = rng.standard_normal() * spec.accuracy_fraction * distance;
    let spike_draw = rng.uniform();
    let spike_offset = (2.0 * rng.uniform() - 1.0) * spec.spike_offset_range;
    let bearing_noise = rng.standard_normal() * spec.bearing_std();

    let spike = if spike_draw < spec.spike_probability {
        spike_offset
    } else {
        0.0
    };
    let range = distance + bias + range_noise + spike;
    let bearing = wrap_angle(true_rel.rotated(-robot_heading).angle() + bearing_noise);
    Ok(LocalMeasurement {
        edge,
        neighbor,
        range,
        bearing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_measurement_is_exact() {
        let mut rng = NoiseStream::new(3, 0);
        let rel = Vec2::new(0.6, 0.8);
        let m = measure_edge(0, 1, rel, 0.0, 0.0, &LidarSpec::noiseless(), &mut rng).unwrap();
        assert_eq!(m.range, 1.0);
        assert!((m.bearing - rel.angle()).abs() < 1e-15);
    }

    #[test]
    fn bias_adds_to_range() {
        let mut rng = NoiseStream::new(3, 0);
        let m = measure_edge(0, 1, Vec2::new(1.0, 0.0), 0.0, 0.006, &LidarSpec::noiseless(), &mut rng).unwrap();
        assert!((m.range - 1.006).abs() < 1e-15);
    }

    #[test]
    fn bearing_is_local() {
        let mut rng = NoiseStream::new(3, 0);
        let heading = std::f64::consts::FRAC_PI_2;
        let m = measure_edge(
            0,
            1,
            Vec2::new(0.0, 2.0),
            heading,
            0.0,
            &LidarSpec::noiseless(),
            &mut rng,
        )
        .unwrap();
        assert!(m.bearing.abs() < 1e-15);
    }

    #[test]
    fn out_of_range_is_reported() {
        let mut rng = NoiseStream::new(3, 0);
        let err = measure_edge(2, 1, Vec2::new(7.0, 0.0), 0.0, 0.0, &LidarSpec::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { edge: 2, .. }));
    }

    #[test]
    fn actuation_deadband_and_clamp() {
        let spec = ActuatorSpec::default();
        assert_eq!(apply_actuation(Vec2::new(0.01, 0.0), &spec), Vec2::ZERO);
        assert_eq!(apply_actuation(Vec2::new(2.0, 0.0), &spec), Vec2::new(1.0, 0.0));
        assert_eq!(apply_actuation(Vec2::new(0.1, 0.0), &spec), Vec2::new(0.1, 0.0));
    }

    #[test]
    fn bias_table_rejects_double_bias_and_foreign_robot() {
        let g = crate::formation::square_with_diagonal();
        assert!(BiasTable::single(2, 0, 0.006, &g).is_err());
        let both = vec![
            BiasEntry {
                robot: 0,
                edge: 0,
                mu: 0.006,
            },
            BiasEntry {
                robot: 1,
                edge: 0,
                mu: 0.004,
            },
        ];
        assert!(BiasTable::new(both, &g).is_err());
        let t = BiasTable::single(0, 0, 0.006, &g).unwrap();
        assert_eq!(t.get(0, 0), 0.006);
        assert_eq!(t.get(1, 0), 0.0);
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        let mut a = NoiseStream::new(9, 0);
        let mut b = NoiseStream::new(9, 1);
        let mut a2 = NoiseStream::new(9, 0);
        let xa: Vec<f64> = (0..4).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..4).map(|_| b.uniform()).collect();
        let xa2: Vec<f64> = (0..4).map(|_| a2.uniform()).collect();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }
}
