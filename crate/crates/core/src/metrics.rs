//! Per-episode summaries shared by the learning agent and the baselines.

use serde::{Deserialize, Serialize};

use crate::env::StepOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Mean reward, i.e. the min-rate credited on constraint-satisfying steps.
    pub avg_min_rate: f64,
    /// Mean sum-rate credited on constraint-satisfying steps.
    pub avg_sum_rate: f64,
    pub covert_violation_rate: f64,
    /// Fraction of steps where at least one user missed its QoS target.
    pub qos_violation_rate: f64,
    pub mean_kl: f64,
    pub mean_radiated_power: f64,
    pub mean_penalty: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    steps: usize,
    sums: EpisodeMetrics,
}

impl MetricsAccumulator {
    pub fn push(&mut self, o: &StepOutcome) {
        let s = &mut self.sums;
        s.avg_min_rate += o.reward;
        s.avg_sum_rate += o.covert_sum_rate();
        s.covert_violation_rate += f64::from(u8::from(o.covert_violated));
        s.qos_violation_rate += f64::from(u8::from(o.qos_violated.iter().any(|&v| v)));
        s.mean_kl += o.kl;
        s.mean_radiated_power += o.radiated_power;
        s.mean_penalty += o.penalty;
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn finish(self, episode: usize) -> EpisodeMetrics {
        let n = self.steps.max(1) as f64;
        let s = self.sums;
        EpisodeMetrics {
            episode,
            avg_min_rate: s.avg_min_rate / n,
            avg_sum_rate: s.avg_sum_rate / n,
            covert_violation_rate: s.covert_violation_rate / n,
            qos_violation_rate: s.qos_violation_rate / n,
            mean_kl: s.mean_kl / n,
            mean_radiated_power: s.mean_radiated_power / n,
            mean_penalty: s.mean_penalty / n,
        }
    }
}

/// Field-wise mean; `episode` is taken from the last entry.
pub fn average(window: &[EpisodeMetrics]) -> EpisodeMetrics {
    let n = window.len().max(1) as f64;
    let mut out = EpisodeMetrics {
        episode: window.last().map_or(0, |m| m.episode),
        ..Default::default()
    };
    for m in window {
        out.avg_min_rate += m.avg_min_rate / n;
        out.avg_sum_rate += m.avg_sum_rate / n;
        out.covert_violation_rate += m.covert_violation_rate / n;
        out.qos_violation_rate += m.qos_violation_rate / n;
        out.mean_kl += m.mean_kl / n;
        out.mean_radiated_power += m.mean_radiated_power / n;
        out.mean_penalty += m.mean_penalty / n;
    }
    out
}

/// Last `fraction` of the series (at least one entry).
pub fn tail(series: &[EpisodeMetrics], fraction: f64) -> &[EpisodeMetrics] {
    let n = ((series.len() as f64 * fraction).ceil() as usize).clamp(1, series.len().max(1));
    &series[series.len().saturating_sub(n)..]
}

/// Least-squares slope of `values` against their index.
pub fn slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// First episode count at which the trailing `window` values of the series
/// have a fitted slope below `tolerance` per episode.
pub fn plateau_at(values: &[f64], window: usize, tolerance: f64) -> Option<usize> {
    if window < 2 {
        return None;
    }
    (window..=values.len()).find(|&end| slope(&values[end - window..end]).abs() < tolerance)
}
