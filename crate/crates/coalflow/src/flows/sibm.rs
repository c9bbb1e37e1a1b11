//! Systems of interacting Brownian motions driven by a covariance kernel:
//! the m-point motion of the white-noise flow. Positions advance by
//! correlated Gaussian increments with covariance `rho(x_i - x_j)`;
//! distinct particles never merge, while exactly coincident starting
//! points share one path forever.
//!
//! The Euler step must resolve the kernel's correlation length or the
//! near-contact dynamics (which produce coalescence in the scaling limit)
//! are stepped over entirely; each grid step is therefore integrated with
//! internal substeps bounded by `halfwidth^2 / (100 rho(0))`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::flows::bundle::LabeledPathBundle;
use crate::flows::kernel::RhoEval;
use crate::linalg::psd_sqrt;
use crate::rng::RngStream;

/// Relative eigenvalue clipping tolerance for the covariance square root.
pub const EIGEN_CLIP_RELATIVE: f64 = 1e-9;

/// A branching-rate evaluator paired with the per-cluster clocks it
/// accumulates into.
pub(crate) type ClockAccumulation<'a> = (&'a dyn Fn(f64) -> f64, &'a mut [f64]);

/// Substep resolution: step variance of a pair difference is kept below
/// `(halfwidth / 5)^2`.
const SUBSTEP_RESOLUTION: f64 = 100.0;

#[derive(Debug, Clone)]
pub(crate) struct SibmWalker<'a, R: RhoEval> {
    rho: &'a R,
    rho0: f64,
    clip_tol: f64,
    sub_dt: f64,
    cluster_pos: Vec<f64>,
    label_cluster: Vec<usize>,
    min_eig: f64,
    // workspace
    pre_pos: Vec<f64>,
    cov: Vec<f64>,
    z: Vec<f64>,
}

impl<'a, R: RhoEval> SibmWalker<'a, R> {
    pub(crate) fn new(initial: &[f64], rho: &'a R, grid_step: f64) -> Self {
        let rho0 = rho.rho0();
        let sub_dt = match rho.correlation_halfwidth() {
            Some(w) => (w * w / (SUBSTEP_RESOLUTION * rho0)).min(grid_step),
            None => grid_step,
        };

        // clusters of exactly coincident starting points, ascending order
        let m = initial.len();
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_unstable_by(|&a, &b| initial[a].total_cmp(&initial[b]));
        let mut cluster_pos: Vec<f64> = Vec::new();
        let mut label_cluster = vec![0usize; m];
        for &label in &idx {
            let pos = initial[label];
            if cluster_pos.last() != Some(&pos) {
                cluster_pos.push(pos);
            }
            label_cluster[label] = cluster_pos.len() - 1;
        }

        SibmWalker {
            rho,
            rho0,
            clip_tol: EIGEN_CLIP_RELATIVE * rho0,
            sub_dt,
            cluster_pos,
            label_cluster,
            min_eig: 0.0,
            pre_pos: Vec::new(),
            cov: Vec::new(),
            z: Vec::new(),
        }
    }

    pub(crate) fn label_position(&self, label: usize) -> f64 {
        self.cluster_pos[self.label_cluster[label]]
    }

    pub(crate) fn cluster_of(&self, label: usize) -> usize {
        self.label_cluster[label]
    }

    pub(crate) fn n_clusters(&self) -> usize {
        self.cluster_pos.len()
    }

    pub(crate) fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    /// Smallest label in each cluster, for partition rows.
    pub(crate) fn group_reps(&self) -> Vec<u32> {
        let mut rep = vec![u32::MAX; self.cluster_pos.len()];
        for (label, &c) in self.label_cluster.iter().enumerate() {
            rep[c] = rep[c].min(label as u32);
        }
        self.label_cluster.iter().map(|&c| rep[c]).collect()
    }

    fn substep(&mut self, h: f64, stream: &mut RngStream) -> Result<()> {
        let g = self.cluster_pos.len();
        let sqrt_h = h.sqrt();
        match g {
            1 => {
                self.cluster_pos[0] += sqrt_h * self.rho0.sqrt() * stream.standard_normal();
            }
            2 => {
                let b = self.rho.rho(self.cluster_pos[0] - self.cluster_pos[1]);
                let l1 = self.rho0 + b;
                let l2 = self.rho0 - b;
                self.min_eig = self.min_eig.min(l1).min(l2);
                if l1 < -self.clip_tol || l2 < -self.clip_tol {
                    return Err(Error::numerical(
                        format!("pair covariance not PSD: eigenvalues {l1}, {l2}"),
                        Some(vec![self.rho0, b, b, self.rho0]),
                    ));
                }
                let u = (l1.max(0.0) / 2.0).sqrt();
                let v = (l2.max(0.0) / 2.0).sqrt();
                let z1 = stream.standard_normal();
                let z2 = stream.standard_normal();
                self.cluster_pos[0] += sqrt_h * (u * z1 + v * z2);
                self.cluster_pos[1] += sqrt_h * (u * z1 - v * z2);
            }
            _ => {
                self.cov.clear();
                self.cov.resize(g * g, 0.0);
                for i in 0..g {
                    self.cov[i * g + i] = self.rho0;
                    for j in (i + 1)..g {
                        let r = self.rho.rho(self.cluster_pos[i] - self.cluster_pos[j]);
                        self.cov[i * g + j] = r;
                        self.cov[j * g + i] = r;
                    }
                }
                let (root, min_eig) = psd_sqrt(&self.cov, g, self.clip_tol)?;
                self.min_eig = self.min_eig.min(min_eig);
                self.z.clear();
                for _ in 0..g {
                    self.z.push(stream.standard_normal());
                }
                for i in 0..g {
                    let mut acc = 0.0;
                    for k in 0..g {
                        acc += root[i * g + k] * self.z[k];
                    }
                    self.cluster_pos[i] += sqrt_h * acc;
                }
            }
        }
        Ok(())
    }

    /// One grid step, internally substepped. When `clocks` is given, each
    /// cluster's time change `integral sigma(position) ds` is accumulated
    /// by the trapezoid rule at substep resolution.
    pub(crate) fn step_with_clock(
        &mut self,
        dt: f64,
        mut clock: Option<ClockAccumulation<'_>>,
        stream: &mut RngStream,
    ) -> Result<()> {
        let n_sub = (dt / self.sub_dt - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n_sub as f64;
        for _ in 0..n_sub {
            if let Some((sigma, clocks)) = clock.as_mut() {
                self.pre_pos.clear();
                self.pre_pos.extend_from_slice(&self.cluster_pos);
                self.substep(h, stream)?;
                for (c, acc) in clocks.iter_mut().enumerate() {
                    *acc += 0.5 * h * (sigma(self.pre_pos[c]) + sigma(self.cluster_pos[c]));
                }
            } else {
                self.substep(h, stream)?;
            }
        }
        Ok(())
    }

    pub(crate) fn step(&mut self, dt: f64, stream: &mut RngStream) -> Result<()> {
        self.step_with_clock(dt, None, stream)
    }
}

/// Simulate an `m`-system of interacting Brownian motions on a uniform
/// grid. Increments are jointly Gaussian with covariance
/// `rho(x_i - x_j) dt`, via the clipped PSD square root of the covariance
/// matrix; no artificial merging is ever performed.
pub fn simulate_sibm<R: RhoEval>(
    initial: &[f64],
    rho: &R,
    horizon: f64,
    step: f64,
    stream: &mut RngStream,
) -> Result<LabeledPathBundle> {
    if initial.is_empty() {
        return Err(Error::parameter("need at least one starting point"));
    }
    if initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::parameter("starting points must be finite"));
    }
    if !(step > 0.0) || !(horizon >= step) {
        return Err(Error::parameter("need step > 0 and horizon >= one step"));
    }
    let n_steps = ((horizon / step).round() as usize).max(1);
    let m = initial.len();

    let mut walker = SibmWalker::new(initial, rho, step);
    let mut positions: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut v = Vec::with_capacity(n_steps + 1);
            v.push(initial[i]);
            v
        })
        .collect();
    let reps = walker.group_reps();
    let mut groups: Vec<Vec<u32>> = Vec::with_capacity(n_steps + 1);
    groups.push(reps.clone());

    for _ in 0..n_steps {
        walker.step(step, stream)?;
        for (label, path) in positions.iter_mut().enumerate() {
            path.push(walker.label_position(label));
        }
        groups.push(reps.clone());
    }

    // coincident starts are one path from time 0; nothing merges later
    let mut merge_times = BTreeMap::new();
    for a in 0..m {
        for b in (a + 1)..m {
            if walker.cluster_of(a) == walker.cluster_of(b) {
                merge_times.insert((a as u32, b as u32), 0.0);
            }
        }
    }

    Ok(LabeledPathBundle {
        step,
        speed: rho.rho0(),
        positions,
        groups,
        merge_times,
        min_covariance_eigenvalue: walker.min_eigenvalue(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::kernel::{scale_rho, ConstantRho, InteractionKernel};
    use crate::stats;

    #[test]
    fn single_particle_is_brownian_with_speed_rho0() {
        let kernel = InteractionKernel::standard_gaussian();
        let (t_end, dt) = (0.25, 1e-3);
        let n = 10_000;
        let mut endpoints = Vec::with_capacity(n);
        for k in 0..n {
            let mut stream = RngStream::new(21, k as u64);
            let bundle = simulate_sibm(&[0.7], &kernel, t_end, dt, &mut stream).unwrap();
            endpoints.push(bundle.position(0, bundle.n_times() - 1));
        }
        let sd = (kernel.rho0() * t_end).sqrt();
        let ks = stats::ks_one_sample(&endpoints, |x| stats::normal_cdf((x - 0.7) / sd)).unwrap();
        assert!(ks.statistic < 0.02, "KS = {}", ks.statistic);
    }

    #[test]
    fn coincident_starts_stay_identical() {
        let kernel = InteractionKernel::standard_gaussian();
        let mut stream = RngStream::new(22, 0);
        let bundle = simulate_sibm(&[0.3, -1.0, 0.3], &kernel, 0.5, 1e-2, &mut stream).unwrap();
        for k in 0..bundle.n_times() {
            assert_eq!(
                bundle.position(0, k).to_bits(),
                bundle.position(2, k).to_bits()
            );
            assert_ne!(bundle.position(0, k), bundle.position(1, k));
        }
        assert_eq!(bundle.merge_time(0, 2), Some(0.0));
        assert_eq!(bundle.merge_time(0, 1), None);
    }

    #[test]
    fn increment_covariance_tracks_rho_of_distance() {
        let kernel = InteractionKernel::standard_gaussian();
        let d0 = 0.3;
        let dt = 1e-3;
        let n = 10_000;
        let mut products = Vec::with_capacity(n);
        for k in 0..n {
            let mut stream = RngStream::new(23, k as u64);
            let bundle = simulate_sibm(&[0.0, d0], &kernel, dt, dt, &mut stream).unwrap();
            let da = bundle.position(0, 1) - bundle.position(0, 0);
            let db = bundle.position(1, 1) - bundle.position(1, 0);
            products.push(da * db / dt);
        }
        let est = stats::mean_se(&products);
        let z = est.z_to(kernel.rho(d0));
        assert!(z.abs() < 3.0, "z = {z}, mean = {}", est.value);
    }

    #[test]
    fn degenerate_constant_rho_translates_rigidly() {
        let rho = ConstantRho(2.0);
        let mut stream = RngStream::new(24, 0);
        let bundle = simulate_sibm(&[-1.0, 0.0, 2.5], &rho, 0.5, 1e-2, &mut stream).unwrap();
        let last = bundle.n_times() - 1;
        for k in [1usize, last / 2, last] {
            assert!((bundle.position(1, k) - bundle.position(0, k) - 1.0).abs() < 1e-9);
            assert!((bundle.position(2, k) - bundle.position(1, k) - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn covariance_stays_psd_within_guard() {
        let kernel = InteractionKernel::standard_gaussian();
        let mut worst = 0.0f64;
        for k in 0..10_000 {
            let mut stream = RngStream::new(25, k as u64);
            let bundle =
                simulate_sibm(&[-0.4, -0.1, 0.2, 0.9], &kernel, 0.2, 1e-2, &mut stream).unwrap();
            worst = worst.min(bundle.min_covariance_eigenvalue);
        }
        assert!(worst > -1e-6 * kernel.rho0(), "min eigenvalue {worst}");
    }

    #[test]
    fn scaled_kernels_force_finer_substeps() {
        let kernel = InteractionKernel::standard_gaussian();
        let s16 = scale_rho(&kernel, 16.0).unwrap();
        let w1 = SibmWalker::new(&[0.0, 1.0], &kernel, 1e-3);
        let w16 = SibmWalker::new(&[0.0, 1.0], &s16, 1e-3);
        assert_eq!(w1.sub_dt, 1e-3); // unit scale needs no refinement
        assert!(w16.sub_dt < 1e-4);
    }

    #[test]
    fn distinct_particles_never_collide_exactly() {
        let kernel = InteractionKernel::standard_gaussian();
        let scaled = scale_rho(&kernel, 4.0).unwrap();
        for k in 0..50 {
            let mut stream = RngStream::new(26, k as u64);
            let bundle = simulate_sibm(&[0.0, 0.05], &scaled, 0.5, 1e-2, &mut stream).unwrap();
            for t in 0..bundle.n_times() {
                assert!(bundle.position(0, t) != bundle.position(1, t));
            }
        }
    }
}
