//! Recorded output of finite particle-flow simulations: positions on a
//! uniform grid plus the time-indexed coalescence partition of labels.

use std::collections::BTreeMap;

use serde::Serialize;

/// `m` labeled trajectories on a uniform grid, with the coalescence
/// partition at each grid time. For coalescing systems the partition only
/// coarsens; for interacting (non-coalescing) systems it is constant and
/// reflects exactly coincident starting points.
#[derive(Debug, Clone)]
pub struct LabeledPathBundle {
    /// Grid step.
    pub step: f64,
    /// Variance per unit time of each marginal path (`rho` for coalescing
    /// systems, `rho(0)` for interacting ones).
    pub speed: f64,
    /// `positions[label][k]` = position of `label` at time `k * step`.
    pub positions: Vec<Vec<f64>>,
    /// `groups[k][label]` = the smallest label sharing `label`'s group at
    /// time `k * step`.
    pub groups: Vec<Vec<u32>>,
    /// Recorded merge time per label pair `(i, j)`, `i < j`.
    pub(crate) merge_times: BTreeMap<(u32, u32), f64>,
    /// Most negative covariance eigenvalue encountered while driving the
    /// system (0 for coalescing systems, which need no matrix root).
    pub min_covariance_eigenvalue: f64,
}

impl LabeledPathBundle {
    pub fn labels(&self) -> usize {
        self.positions.len()
    }

    /// Number of grid times, including time 0.
    pub fn n_times(&self) -> usize {
        self.groups.len()
    }

    pub fn horizon(&self) -> f64 {
        (self.n_times() - 1) as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|k| k as f64 * self.step).collect()
    }

    pub fn position(&self, label: usize, time_idx: usize) -> f64 {
        self.positions[label][time_idx]
    }

    pub fn path(&self, label: usize) -> &[f64] {
        &self.positions[label]
    }

    /// Representative label of `label`'s group at grid index `time_idx`.
    pub fn group(&self, time_idx: usize, label: usize) -> u32 {
        self.groups[time_idx][label]
    }

    /// Recorded merge time of labels `i` and `j`, if they ever merged.
    /// Equal starting points merge at time 0; mid-step merges are recorded
    /// at the midpoint of the step in which they were detected.
    pub fn merge_time(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(0.0);
        }
        let key = (i.min(j) as u32, i.max(j) as u32);
        self.merge_times.get(&key).copied()
    }

    /// All recorded merges as `(label_i, label_j, time)`.
    pub fn merges(&self) -> Vec<(u32, u32, f64)> {
        self.merge_times
            .iter()
            .map(|(&(i, j), &t)| (i, j, t))
            .collect()
    }

    /// JSON-ready summary (merge times plus grid metadata).
    pub fn summary(&self, seed: u64, stream_id: u64) -> BundleSummary {
        BundleSummary {
            labels: self.labels(),
            step: self.step,
            horizon: self.horizon(),
            speed: self.speed,
            seed,
            stream_id,
            stream_policy: "counter-based; one stream per replicate".into(),
            merges: self.merges(),
            min_covariance_eigenvalue: self.min_covariance_eigenvalue,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub labels: usize,
    pub step: f64,
    pub horizon: f64,
    pub speed: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub stream_policy: String,
    pub merges: Vec<(u32, u32, f64)>,
    pub min_covariance_eigenvalue: f64,
}
