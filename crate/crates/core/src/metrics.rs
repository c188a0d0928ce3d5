//! Summary statistics over a run's tick records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::sim::TickRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsOptions {
    /// Fraction of the run, counted from the end, used for steady-state
    /// statistics.
    pub tail_fraction: f64,
    /// Error bound for the settling time, meters.
    pub settle_epsilon: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            tail_fraction: 0.2,
            settle_epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub tail_mean: f64,
    pub tail_std: f64,
    pub head_mean: f64,
    pub head_std: f64,
    /// `tail_mean - head_mean`.
    pub split: f64,
    /// Estimate in the last record, if the edge was being estimated.
    pub mu_hat_final: Option<f64>,
    /// Mean estimate over the tail window.
    pub mu_hat_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ticks: usize,
    /// Time of the first record of the tail window.
    pub tail_start: f64,
    /// Earliest time after which every sensed error stays below the bound.
    pub settling_time: Option<f64>,
    pub edges: Vec<EdgeSummary>,
    /// Largest `|mean error|` over both sides of every edge in the tail window.
    pub max_abs_mean_error: f64,
    /// Largest instantaneous `|error|` in the tail window.
    pub max_abs_error: f64,
    pub centroid_path_length: f64,
    /// Straight-line distance between the first and last centroid.
    pub centroid_displacement: f64,
    /// Mean centroid velocity over the tail window.
    pub drift_velocity: Vec2,
    pub drift_speed: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn metrics(records: &[TickRecord], options: &MetricsOptions) -> Result<Metrics> {
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Empty("metrics need at least one tick record")),
    };
    if !(options.tail_fraction > 0.0 && options.tail_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "tail fraction must lie in (0, 1], got {}",
            options.tail_fraction
        )));
    }
    let tail_len = ((records.len() as f64 * options.tail_fraction).round() as usize).clamp(1, records.len());
    let tail = &records[records.len() - tail_len..];

    let settling_time = {
        let mut settled_from = None;
        for r in records.iter().rev() {
            if r.max_abs_error() < options.settle_epsilon {
                settled_from = Some(r.t);
            } else {
                break;
            }
        }
        settled_from
    };

    let edge_count = first.edges.len();
    let edges: Vec<EdgeSummary> = (0..edge_count)
        .map(|k| {
            let (tail_mean, tail_std) = mean_std(tail.iter().map(|r| r.edges[k].e_tail));
            let (head_mean, head_std) = mean_std(tail.iter().map(|r| r.edges[k].e_head));
            let estimates: Vec<f64> = tail.iter().filter_map(|r| r.edges[k].mu_hat).collect();
            EdgeSummary {
                tail_mean,
                tail_std,
                head_mean,
                head_std,
                split: tail_mean - head_mean,
                mu_hat_final: last.edges[k].mu_hat,
                mu_hat_mean: (!estimates.is_empty()).then(|| estimates.iter().sum::<f64>() / estimates.len() as f64),
            }
        })
        .collect();

    let max_abs_mean_error = edges
        .iter()
        .flat_map(|e| [e.tail_mean.abs(), e.head_mean.abs()])
        .fold(0.0, f64::max);
    let max_abs_error = tail.iter().map(TickRecord::max_abs_error).fold(0.0, f64::max);
    let centroid_path_length = records.windows(2).map(|w| (w[1].centroid - w[0].centroid).norm()).sum();
    let tail_first = &tail[0];
    let span = last.t - tail_first.t;
    let drift_velocity = if span > 0.0 {
        (last.centroid - tail_first.centroid) * (1.0 / span)
    } else {
        Vec2::ZERO
    };

    Ok(Metrics {
        ticks: records.len(),
        tail_start: tail_first.t,
        settling_time,
        edges,
        max_abs_mean_error,
        max_abs_error,
        centroid_path_length,
        centroid_displacement: (last.centroid - first.centroid).norm(),
        drift_velocity,
        drift_speed: drift_velocity.norm(),
    })
}

impl Metrics {
    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let mm = |v: f64| format!("{:+.3} mm", v * 1e3);
        let _ = writeln!(out, "ticks                 {}", self.ticks);
        let _ = writeln!(
            out,
            "settling time         {}",
            self.settling_time
                .map_or("not settled".to_string(), |t| format!("{t:.1} s"))
        );
        let _ = writeln!(out, "tail window from      {:.1} s", self.tail_start);
        let _ = writeln!(out, "max |mean e| (tail)   {}", mm(self.max_abs_mean_error));
        let _ = writeln!(out, "max |e| (tail)        {}", mm(self.max_abs_error));
        let _ = writeln!(out, "centroid path length  {:.4} m", self.centroid_path_length);
        let _ = writeln!(out, "centroid displacement {:.4} m", self.centroid_displacement);
        let _ = writeln!(
            out,
            "drift velocity        ({:+.4}, {:+.4}) mm/s, speed {:.4} mm/s",
            self.drift_velocity.x * 1e3,
            self.drift_velocity.y * 1e3,
            self.drift_speed * 1e3
        );
        let _ = writeln!(
            out,
            "{:>4}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12}",
            "edge", "tail mean", "head mean", "split", "mu_hat", "mu_hat mean"
        );
        for (k, e) in self.edges.iter().enumerate() {
            let opt = |v: Option<f64>| v.map_or("-".to_string(), mm);
            let _ = writeln!(
                out,
                "{:>4}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12}",
                k,
                mm(e.tail_mean),
                mm(e.head_mean),
                mm(e.split),
                opt(e.mu_hat_final),
                opt(e.mu_hat_mean)
            );
        }
        out
    }
}
