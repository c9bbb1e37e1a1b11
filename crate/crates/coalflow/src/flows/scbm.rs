//! Systems of coalescing Brownian motions and the incremental flow
//! extension.
//!
//! Between grid points a pair's difference process (variance `2 rho` per
//! unit time) is a Brownian bridge given its endpoints, so two order-
//! adjacent groups with same-sign gaps `d0`, `d1` merge with probability
//! `exp(-d0 d1 / (rho dt))`, and with probability one when the endpoint
//! signs differ. This removes the O(sqrt(dt)) bias a naive crossing check
//! would carry. Merge times are recorded at the step midpoint, and the
//! merged group's position is redrawn from its exact conditional law given
//! a midpoint meeting: mean of the pre-step positions plus a centered
//! Gaussian of variance `3 rho dt / 4`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::flows::bundle::LabeledPathBundle;
use crate::rng::RngStream;

#[derive(Debug, Clone)]
struct Group {
    pos: f64,
    members: Vec<u32>,
}

/// Mutable state of a coalescing system; draws are consumed in position-
/// sorted order, so permuting the initial labels permutes the output paths
/// bit-for-bit.
#[derive(Debug, Clone)]
pub(crate) struct CoalescingWalker {
    speed: f64,
    groups: Vec<Group>,
    label_group: Vec<usize>,
    merge_log: Vec<(u32, u32, f64)>,
    time: f64,
    // step workspace, reused to keep the hot loop allocation-free
    order: Vec<usize>,
    proposed: Vec<f64>,
    merge_next: Vec<bool>,
    alive: Vec<bool>,
}

impl CoalescingWalker {
    /// Build the initial partition: exactly coincident starting points are
    /// merged at time 0.
    pub(crate) fn new(initial: &[f64], speed: f64) -> Self {
        let m = initial.len();
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_unstable_by(|&a, &b| initial[a].total_cmp(&initial[b]));

        let mut groups: Vec<Group> = Vec::new();
        let mut label_group = vec![0usize; m];
        let mut merge_log = Vec::new();
        for &label in &idx {
            let pos = initial[label];
            match groups.last_mut() {
                Some(g) if g.pos == pos => {
                    for &other in &g.members {
                        let (a, b) = (other.min(label as u32), other.max(label as u32));
                        merge_log.push((a, b, 0.0));
                    }
                    g.members.push(label as u32);
                    label_group[label] = groups.len() - 1;
                }
                _ => {
                    groups.push(Group {
                        pos,
                        members: vec![label as u32],
                    });
                    label_group[label] = groups.len() - 1;
                }
            }
        }

        CoalescingWalker {
            speed,
            groups,
            label_group,
            merge_log,
            time: 0.0,
            order: Vec::new(),
            proposed: Vec::new(),
            merge_next: Vec::new(),
            alive: Vec::new(),
        }
    }

    pub(crate) fn label_position(&self, label: usize) -> f64 {
        self.groups[self.label_group[label]].pos
    }

    /// Representative (smallest) label of each label's group.
    pub(crate) fn fill_group_row(&self, row: &mut Vec<u32>) {
        row.clear();
        for &g in &self.label_group {
            let rep = self.groups[g].members.iter().min().copied().unwrap();
            row.push(rep);
        }
    }

    pub(crate) fn merge_log(&self) -> &[(u32, u32, f64)] {
        &self.merge_log
    }

    /// One Euler step of length `dt` with exact bridge-crossing merges.
    pub(crate) fn step(&mut self, dt: f64, stream: &mut RngStream) {
        let g = self.groups.len();
        let midpoint = self.time + 0.5 * dt;
        self.time += dt;
        if g == 0 {
            return;
        }
        let sd = (self.speed * dt).sqrt();

        self.order.clear();
        self.order.extend(0..g);
        let groups = &self.groups;
        self.order
            .sort_unstable_by(|&a, &b| groups[a].pos.total_cmp(&groups[b].pos));

        // independent increments, drawn in position order
        self.proposed.clear();
        self.proposed.resize(g, 0.0);
        for &gi in &self.order {
            self.proposed[gi] = self.groups[gi].pos + stream.centered_gaussian(sd);
        }

        if g == 1 {
            self.groups[0].pos = self.proposed[0];
            return;
        }

        // bridge-crossing detection between order-adjacent groups
        self.merge_next.clear();
        self.merge_next.resize(g - 1, false);
        for j in 0..g - 1 {
            let a = self.order[j];
            let b = self.order[j + 1];
            let d0 = self.groups[b].pos - self.groups[a].pos;
            let d1 = self.proposed[b] - self.proposed[a];
            self.merge_next[j] = if d1 <= 0.0 {
                true
            } else {
                stream.uniform() < (-d0 * d1 / (self.speed * dt)).exp()
            };
        }

        // fold runs of merging neighbours into single groups
        self.alive.clear();
        self.alive.resize(g, true);
        let mut j = 0usize;
        while j < g {
            let mut run_end = j;
            while run_end < g - 1 && self.merge_next[run_end] {
                run_end += 1;
            }
            if run_end == j {
                let gi = self.order[j];
                self.groups[gi].pos = self.proposed[gi];
                j += 1;
                continue;
            }
            // merged position: exact conditional law given a midpoint meeting
            let mut mean = 0.0;
            for k in j..=run_end {
                mean += self.groups[self.order[k]].pos;
            }
            mean /= (run_end - j + 1) as f64;
            let new_pos = mean + stream.centered_gaussian((0.75 * self.speed * dt).sqrt());

            let head = self.order[j];
            for k in (j + 1)..=run_end {
                let gi = self.order[k];
                self.alive[gi] = false;
                let absorbed = std::mem::take(&mut self.groups[gi].members);
                for &x in &self.groups[head].members {
                    for &y in &absorbed {
                        self.merge_log.push((x.min(y), x.max(y), midpoint));
                    }
                }
                self.groups[head].members.extend(absorbed);
            }
            self.groups[head].pos = new_pos;
            j = run_end + 1;
        }

        // compact dead groups and rebuild the label index
        let alive = std::mem::take(&mut self.alive);
        let mut keep = 0usize;
        for (gi, &is_alive) in alive.iter().enumerate().take(g) {
            if is_alive {
                self.groups.swap(keep, gi);
                keep += 1;
            }
        }
        self.groups.truncate(keep);
        self.alive = alive;
        for (gi, group) in self.groups.iter().enumerate() {
            for &label in &group.members {
                self.label_group[label as usize] = gi;
            }
        }
    }

    /// Advance by an arbitrary duration: full steps of `dt` plus one exact
    /// remainder step (durations below `dt` become a single step).
    pub(crate) fn advance(&mut self, duration: f64, dt: f64, stream: &mut RngStream) {
        if duration <= 0.0 {
            return;
        }
        let n_full = (duration / dt + 1e-9).floor() as usize;
        for _ in 0..n_full {
            self.step(dt, stream);
        }
        let remainder = duration - n_full as f64 * dt;
        if remainder > 1e-12 * dt {
            self.step(remainder, stream);
        }
    }
}

fn validate_grid(horizon: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(horizon >= step) || !horizon.is_finite() {
        return Err(Error::parameter(format!(
            "horizon must be at least one step, got {horizon}"
        )));
    }
    Ok(((horizon / step).round() as usize).max(1))
}

fn validate_initial(initial: &[f64]) -> Result<()> {
    if initial.is_empty() {
        return Err(Error::parameter("need at least one starting point"));
    }
    if initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::parameter("starting points must be finite"));
    }
    Ok(())
}

/// Simulate an `m`-system of coalescing Brownian motions with the given
/// speed (variance per unit time) on a uniform grid.
pub fn simulate_scbm(
    initial: &[f64],
    speed: f64,
    horizon: f64,
    step: f64,
    stream: &mut RngStream,
) -> Result<LabeledPathBundle> {
    validate_initial(initial)?;
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::parameter(format!(
            "speed must be positive, got {speed}"
        )));
    }
    let n_steps = validate_grid(horizon, step)?;
    let m = initial.len();

    let mut walker = CoalescingWalker::new(initial, speed);
    let mut positions: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut v = Vec::with_capacity(n_steps + 1);
            v.push(initial[i]);
            v
        })
        .collect();
    let mut groups: Vec<Vec<u32>> = Vec::with_capacity(n_steps + 1);
    let mut row = Vec::with_capacity(m);
    walker.fill_group_row(&mut row);
    groups.push(row.clone());

    for _ in 0..n_steps {
        walker.step(step, stream);
        for (label, path) in positions.iter_mut().enumerate() {
            path.push(walker.label_position(label));
        }
        walker.fill_group_row(&mut row);
        groups.push(row.clone());
    }

    let mut merge_times = BTreeMap::new();
    for &(a, b, t) in walker.merge_log() {
        merge_times.entry((a, b)).or_insert(t);
    }

    Ok(LabeledPathBundle {
        step,
        speed,
        positions,
        groups,
        merge_times,
        min_covariance_eigenvalue: 0.0,
    })
}

/// Extend a recorded coalescing bundle by one label started at `b`: a
/// fresh Brownian path runs from `b` and is glued onto the nearest
/// existing path at its first crossing, exactly as the flow's transition
/// kernel prescribes. Starting at an existing label's starting point
/// duplicates that path without consuming randomness.
pub fn extend_flow(
    existing: &LabeledPathBundle,
    b: f64,
    stream: &mut RngStream,
) -> Result<LabeledPathBundle> {
    if !b.is_finite() {
        return Err(Error::parameter("new label start must be finite"));
    }
    let m = existing.labels();
    let n_times = existing.n_times();
    let new_label = m as u32;
    let mut out = existing.clone();

    // duplicate start: reuse the existing path
    if let Some(partner) = (0..m).find(|&l| existing.positions[l][0] == b) {
        out.positions.push(existing.positions[partner].clone());
        for k in 0..n_times {
            let rep = out.groups[k][partner];
            out.groups[k].push(rep);
        }
        for other in 0..m {
            let t = if other == partner {
                Some(0.0)
            } else {
                existing.merge_time(other, partner)
            };
            if let Some(t) = t {
                out.merge_times.insert((other as u32, new_label), t);
            }
        }
        return Ok(out);
    }

    let speed = existing.speed;
    let dt = existing.step;
    let sd = (speed * dt).sqrt();
    let mut path = Vec::with_capacity(n_times);
    path.push(b);
    let mut glued: Option<(usize, f64)> = None; // (partner label, merge time)
    let mut pos = b;

    for k in 0..n_times - 1 {
        if let Some((partner, _)) = glued {
            path.push(existing.positions[partner][k + 1]);
            continue;
        }
        let proposed = pos + stream.centered_gaussian(sd);

        // distinct existing groups at time k, identified by their reps
        let mut lower: Option<(usize, f64)> = None;
        let mut upper: Option<(usize, f64)> = None;
        let mut seen_rep: Vec<u32> = Vec::with_capacity(m);
        for label in 0..m {
            let rep = existing.groups[k][label];
            if rep as usize != label && seen_rep.contains(&rep) {
                continue;
            }
            seen_rep.push(rep);
            let p = existing.positions[rep as usize][k];
            if p <= pos {
                if lower.is_none_or(|(_, lp)| p > lp) {
                    lower = Some((rep as usize, p));
                }
            } else if upper.is_none_or(|(_, up)| p < up) {
                upper = Some((rep as usize, p));
            }
        }

        let mut hit: Option<(usize, f64)> = None; // (partner, gap at step start)
        if let Some((rep, p)) = lower {
            let d0 = pos - p;
            let d1 = proposed - existing.positions[rep][k + 1];
            let crossed = if d1 <= 0.0 {
                true
            } else {
                stream.uniform() < (-d0 * d1 / (speed * dt)).exp()
            };
            if crossed {
                hit = Some((rep, d0));
            }
        }
        if let Some((rep, p)) = upper {
            let d0 = p - pos;
            let d1 = existing.positions[rep][k + 1] - proposed;
            let crossed = if d1 <= 0.0 {
                true
            } else {
                stream.uniform() < (-d0 * d1 / (speed * dt)).exp()
            };
            if crossed && hit.is_none_or(|(_, gap)| d0 < gap) {
                hit = Some((rep, d0));
            }
        }

        if let Some((partner, _)) = hit {
            let tau = k as f64 * dt + 0.5 * dt;
            glued = Some((partner, tau));
            path.push(existing.positions[partner][k + 1]);
            pos = existing.positions[partner][k + 1];
        } else {
            path.push(proposed);
            pos = proposed;
        }
    }

    out.positions.push(path);
    match glued {
        None => {
            for k in 0..n_times {
                out.groups[k].push(new_label);
            }
        }
        Some((partner, tau)) => {
            let glue_idx = ((tau / dt).ceil() as usize).min(n_times - 1);
            for k in 0..n_times {
                if k < glue_idx {
                    out.groups[k].push(new_label);
                } else {
                    let rep = out.groups[k][partner];
                    out.groups[k].push(rep);
                }
            }
            for other in 0..m {
                let t = if other == partner {
                    Some(tau)
                } else {
                    existing.merge_time(other, partner).map(|t| t.max(tau))
                };
                if let Some(t) = t {
                    out.merge_times.insert((other as u32, new_label), t);
                }
            }
        }
    }
    Ok(out)
}
