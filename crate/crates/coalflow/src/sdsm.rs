//! The superprocess with dependent spatial motion, built from the same
//! excursion ensemble as its coalescing-motion counterpart but carried by
//! interacting (never merging) Brownian systems, plus the space-mass-time
//! rescaling `theta^-2 K_theta X_{theta^2 t}` and the convergence
//! experiments comparing the rescaled process against its coalescing
//! limit with speed `rho(0)` and branching rate `sigma` at infinity.

use rayon::prelude::*;
use serde::Serialize;

use crate::branching::{feller_sample_exact, sample_excursion_ensemble, BranchingRate};
use crate::error::{Error, Result};
use crate::flows::kernel::{scale_rho, InteractionKernel, RhoEval};
use crate::flows::sibm::SibmWalker;
use crate::measure::{AtomicMeasure, SourceMeasure};
use crate::rng::RngStream;
use crate::scsm::{
    scsm_sample_general_at, AtomTrack, MeasurePath, STREAM_CARRIERS, STREAM_ENSEMBLE, STREAM_MASSES,
};
use crate::stats::{ks_two_sample, normal_cdf};
use crate::testfn::TestFunction;

// ---------------------------------------------------------------------
// Rescaling
// ---------------------------------------------------------------------

/// The scaling maps induced by one parameter `theta >= 1`: measures map by
/// `theta^-2 K_theta`, time by `theta^2 t`, the interaction by
/// `rho(theta x)` and the branching rate by `sigma(theta x)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RescalingSpec {
    pub theta: f64,
}

impl RescalingSpec {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta >= 1.0) || !theta.is_finite() {
            return Err(Error::parameter(format!(
                "rescaling needs theta >= 1, got {theta}"
            )));
        }
        Ok(RescalingSpec { theta })
    }

    /// `mu -> theta^-2 K_theta mu`: each atom `(a, m)` maps to
    /// `(a / theta, m / theta^2)`.
    pub fn rescale_measure(&self, mu: &AtomicMeasure) -> AtomicMeasure {
        let t2 = self.theta * self.theta;
        let atoms = mu
            .atoms()
            .iter()
            .map(|&(a, m)| (a / self.theta, m / t2))
            .collect();
        AtomicMeasure::new(atoms).expect("rescaling preserves validity")
    }

    pub fn time(&self, t: f64) -> f64 {
        self.theta * self.theta * t
    }

    pub fn kernel<'a>(&self, kernel: &'a InteractionKernel) -> crate::flows::ScaledRho<'a> {
        scale_rho(kernel, self.theta).expect("theta >= 1 was validated")
    }

    pub fn sigma(&self, sigma: &BranchingRate) -> BranchingRate {
        sigma.scale_space(self.theta)
    }
}

/// Free-standing form of the measure map `theta^-2 K_theta`.
pub fn rescale_measure(mu: &AtomicMeasure, theta: f64) -> Result<AtomicMeasure> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::parameter(format!(
            "rescale_measure needs theta > 0, got {theta}"
        )));
    }
    let t2 = theta * theta;
    let atoms = mu
        .atoms()
        .iter()
        .map(|&(a, m)| (a / theta, m / t2))
        .collect();
    AtomicMeasure::new(atoms)
}

/// Inverse of the measure map on sampleable sources: atoms `(a, m)` map to
/// `(theta a, theta^2 m)`, densities dilate accordingly.
fn unscale_source(source: &SourceMeasure, theta: f64) -> Result<SourceMeasure> {
    let t2 = theta * theta;
    Ok(match source {
        SourceMeasure::Atomic { measure } => {
            let atoms = measure
                .atoms()
                .iter()
                .map(|&(a, m)| (theta * a, t2 * m))
                .collect();
            SourceMeasure::atomic(AtomicMeasure::new(atoms)?)
        }
        SourceMeasure::Uniform { lo, hi, mass } => SourceMeasure::Uniform {
            lo: theta * lo,
            hi: theta * hi,
            mass: t2 * mass,
        },
        SourceMeasure::Gaussian { mean, sd, mass } => SourceMeasure::Gaussian {
            mean: theta * mean,
            sd: theta * sd,
            mass: t2 * mass,
        },
    })
}

// ---------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------

/// Simulate the dependent-motion superprocess from a general initial
/// state: the pipeline of the coalescing construction with interacting
/// carriers instead (excursion ensemble at internal cutoff
/// `inf(sigma) * cutoff`, masses on per-carrier clocks). The path is
/// valid on `[cutoff, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sdsm<R: RhoEval>(
    source: &SourceMeasure,
    kernel: &R,
    sigma: &BranchingRate,
    cutoff: f64,
    horizon: f64,
    step: f64,
    prune_dead: bool,
    stream: &RngStream,
) -> Result<MeasurePath> {
    let eps = sigma.require_positive_infimum()?;
    if !(cutoff > 0.0) || !(horizon > cutoff) || !(step > 0.0) {
        return Err(Error::parameter("need 0 < cutoff < horizon and step > 0"));
    }
    let n_steps = ((horizon / step).round() as usize).max(1);
    let start_idx = ((cutoff / step - 1e-9).ceil() as usize).min(n_steps);
    let times: Vec<f64> = (start_idx..=n_steps).map(|k| k as f64 * step).collect();

    let internal_cutoff = eps * cutoff;
    let mut ensemble_stream = stream.substream(STREAM_ENSEMBLE);
    let seeds = sample_excursion_ensemble(source, internal_cutoff, &mut ensemble_stream)?;
    if seeds.is_empty() {
        return Ok(MeasurePath {
            times,
            atoms: Vec::new(),
            speed: kernel.rho0(),
            prune_dead,
        });
    }

    let locations: Vec<f64> = seeds.iter().map(|s| s.location).collect();
    let mut carrier_stream = stream.substream(STREAM_CARRIERS);
    let mut walker = SibmWalker::new(&locations, kernel, step);
    let n_atoms = locations.len();
    let n_clusters = walker.n_clusters();
    let reps = walker.group_reps();
    let sigma_eval = |x: f64| sigma.eval(x);

    // full-grid carrier positions per atom and clock per cluster
    let mut positions_full: Vec<Vec<f64>> = (0..n_atoms)
        .map(|i| {
            let mut v = Vec::with_capacity(n_steps + 1);
            v.push(locations[i]);
            v
        })
        .collect();
    let mut cluster_clock = vec![0.0f64; n_clusters];
    let mut clock_full: Vec<Vec<f64>> = (0..n_atoms)
        .map(|_| {
            let mut v = Vec::with_capacity(n_steps + 1);
            v.push(0.0);
            v
        })
        .collect();
    for _ in 0..n_steps {
        walker.step_with_clock(
            step,
            Some((&sigma_eval, &mut cluster_clock)),
            &mut carrier_stream,
        )?;
        for i in 0..n_atoms {
            positions_full[i].push(walker.label_position(i));
            clock_full[i].push(cluster_clock[walker.cluster_of(i)]);
        }
    }

    let mut mass_stream = stream.substream(STREAM_MASSES);
    let mut tracks = Vec::with_capacity(n_atoms);
    for (i, seed) in seeds.iter().enumerate() {
        let mut masses = Vec::with_capacity(times.len());
        let mut death_time = None;
        let mut mass = seed.initial_mass;
        let mut internal = internal_cutoff;
        for (out_idx, k) in (start_idx..=n_steps).enumerate() {
            let target = clock_full[i][k];
            let dpsi = (target - internal).max(0.0);
            if dpsi > 0.0 {
                mass = feller_sample_exact(mass, dpsi, &mut mass_stream)?;
                internal = target;
            }
            masses.push(mass);
            if mass == 0.0 && death_time.is_none() {
                death_time = Some(times[out_idx]);
            }
        }
        tracks.push(AtomTrack {
            label: i as u32,
            location: seed.location,
            positions: positions_full[i][start_idx..].to_vec(),
            masses,
            groups: vec![reps[i]; times.len()],
            death_time,
            clock: clock_full[i][start_idx..].to_vec(),
        });
    }

    Ok(MeasurePath {
        times,
        atoms: tracks,
        speed: kernel.rho0(),
        prune_dead,
    })
}

/// Single-time draw of the dependent-motion superprocess at `t >= cutoff`.
pub fn sdsm_sample_at<R: RhoEval>(
    source: &SourceMeasure,
    kernel: &R,
    sigma: &BranchingRate,
    cutoff: f64,
    t: f64,
    step: f64,
    stream: &RngStream,
) -> Result<AtomicMeasure> {
    let eps = sigma.require_positive_infimum()?;
    if !(cutoff > 0.0) || !(t >= cutoff) || !(step > 0.0) {
        return Err(Error::parameter("need 0 < cutoff <= t and step > 0"));
    }
    let internal_cutoff = eps * cutoff;
    let mut ensemble_stream = stream.substream(STREAM_ENSEMBLE);
    let seeds = sample_excursion_ensemble(source, internal_cutoff, &mut ensemble_stream)?;
    if seeds.is_empty() {
        return Ok(AtomicMeasure::empty());
    }
    let locations: Vec<f64> = seeds.iter().map(|s| s.location).collect();
    let mut carrier_stream = stream.substream(STREAM_CARRIERS);
    let mut walker = SibmWalker::new(&locations, kernel, step);
    let mut cluster_clock = vec![0.0f64; walker.n_clusters()];
    let sigma_eval = |x: f64| sigma.eval(x);

    let n_full = (t / step + 1e-9).floor() as usize;
    let remainder = t - n_full as f64 * step;
    for sub in 0..n_full + 1 {
        let dt = if sub < n_full { step } else { remainder };
        if dt <= 1e-12 * step {
            continue;
        }
        walker.step_with_clock(
            dt,
            Some((&sigma_eval, &mut cluster_clock)),
            &mut carrier_stream,
        )?;
    }

    let mut mass_stream = stream.substream(STREAM_MASSES);
    let mut out = Vec::with_capacity(seeds.len());
    for (i, seed) in seeds.iter().enumerate() {
        let dpsi = (cluster_clock[walker.cluster_of(i)] - internal_cutoff).max(0.0);
        let mass = if dpsi > 0.0 {
            feller_sample_exact(seed.initial_mass, dpsi, &mut mass_stream)?
        } else {
            seed.initial_mass
        };
        if mass > 0.0 {
            out.push((walker.label_position(i), mass));
        }
    }
    AtomicMeasure::new(out)
}

/// Which of the two equivalent-in-law routes realizes the rescaled
/// process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleRoute {
    /// Simulate directly with parameters `(rho_theta, sigma_theta)` at
    /// horizon `t` (the cheap route).
    Direct,
    /// Simulate the unscaled process to horizon `theta^2 t` from the
    /// blown-up initial state and push the result through
    /// `theta^-2 K_theta` (the cross-check route).
    Pushforward,
}

/// One draw of the rescaled process `X^theta_t` started from the already
/// rescaled initial state `mu_target`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rescaled_sdsm(
    mu_target: &SourceMeasure,
    kernel: &InteractionKernel,
    sigma: &BranchingRate,
    theta: f64,
    t: f64,
    cutoff: f64,
    step: f64,
    route: RescaleRoute,
    stream: &RngStream,
) -> Result<AtomicMeasure> {
    let spec = RescalingSpec::new(theta)?;
    match route {
        RescaleRoute::Direct => {
            let rho_theta = spec.kernel(kernel);
            let sigma_theta = spec.sigma(sigma);
            sdsm_sample_at(mu_target, &rho_theta, &sigma_theta, cutoff, t, step, stream)
        }
        RescaleRoute::Pushforward => {
            let blown_up = unscale_source(mu_target, theta)?;
            let nu = sdsm_sample_at(
                &blown_up,
                kernel,
                sigma,
                spec.time(cutoff),
                spec.time(t),
                step,
                stream,
            )?;
            rescale_measure(&nu, theta)
        }
    }
}

// ---------------------------------------------------------------------
// Convergence experiments
// ---------------------------------------------------------------------

/// CDF of `|D_(t and tau_0)|` for a Brownian difference started at `gap`
/// with the given variance per unit time and absorbed at the origin (the
/// absorbed value contributes an atom at 0).
pub fn absorbed_difference_cdf(gap: f64, variance_per_time: f64, t: f64, y: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    let s = (variance_per_time * t).sqrt();
    1.0 + normal_cdf((y - gap) / s) - normal_cdf((y + gap) / s)
}

/// Left limit of [`absorbed_difference_cdf`]: the law is continuous away
/// from its atom at 0.
pub fn absorbed_difference_cdf_left(gap: f64, variance_per_time: f64, t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        absorbed_difference_cdf(gap, variance_per_time, t, y)
    }
}

/// Pair separations below this are counted as absorbed when comparing
/// against the limiting law. Near-contact interacting pairs contract
/// geometrically until the correlation rounds to one and the float gap
/// freezes around 1e-8/theta, far below this threshold and far below any
/// physical separation; the dynamics themselves never snap positions.
pub const ABSORPTION_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub thetas: Vec<f64>,
    pub phis: Vec<TestFunction>,
    pub t: f64,
    pub cutoff: f64,
    pub step: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Also test the embedded 2-particle pair distance when the source
    /// has two distinct atom locations.
    pub pair_distance: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub theta: f64,
    pub phi_id: String,
    pub ks: f64,
    pub n: usize,
    pub seed: u64,
}

fn parallel_samples<F>(replicates: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    let mut out = vec![Vec::new(); replicates];
    out.par_iter_mut()
        .enumerate()
        .try_for_each(|(rep, slot)| -> Result<()> {
            *slot = f(rep)?;
            Ok(())
        })?;
    Ok(out)
}

/// For each `theta`, simulate the rescaled dependent-motion process (via
/// the direct `(rho_theta, sigma_theta)` route) and the limiting
/// coalescing-motion process (speed `rho(0)`, constant branching rate
/// `lim sigma`), and report the two-sample KS distance of `<phi, X_t>`
/// per test function, plus the 2-particle pair-distance KS against the
/// absorbed-difference law.
pub fn convergence_experiment(
    source: &SourceMeasure,
    kernel: &InteractionKernel,
    sigma: &BranchingRate,
    cfg: &ConvergenceConfig,
) -> Result<Vec<ConvergenceRow>> {
    if !kernel.vanishes_at_infinity() {
        return Err(Error::model(
            "convergence experiment needs rho(x) -> 0 at infinity",
        ));
    }
    let sigma_limit = sigma.limit_at_infinity();
    if !(sigma_limit > 0.0) {
        return Err(Error::model(
            "convergence experiment needs a positive limiting branching rate",
        ));
    }
    if cfg.thetas.iter().any(|&th| th < 1.0) || cfg.replicates < 100 {
        return Err(Error::parameter(
            "need thetas >= 1 and at least 100 replicates",
        ));
    }
    source.validate()?;

    let root = RngStream::new(cfg.seed, 0);
    let n = cfg.replicates;
    let rho0 = kernel.rho0();
    let sigma_const = BranchingRate::constant(sigma_limit)?;

    // pair-distance starting gap: first two distinct atom locations
    let pair_gap = match source {
        SourceMeasure::Atomic { measure } if cfg.pair_distance => {
            let mut locs: Vec<f64> = measure.atoms().iter().map(|&(a, _)| a).collect();
            locs.sort_unstable_by(f64::total_cmp);
            locs.dedup();
            (locs.len() >= 2).then(|| locs[1] - locs[0])
        }
        _ => None,
    };

    // baseline: the limiting coalescing-motion process
    let base_stream = root.substream(0);
    let baseline = parallel_samples(n, |rep| {
        let rs = base_stream.substream(rep as u64);
        let nu =
            scsm_sample_general_at(source, &sigma_const, rho0, cfg.cutoff, cfg.t, cfg.step, &rs)?;
        Ok(cfg
            .phis
            .iter()
            .map(|phi| nu.integrate(|x| phi.eval(x)))
            .collect())
    })?;

    let mut rows = Vec::new();
    for (ti, &theta) in cfg.thetas.iter().enumerate() {
        let spec = RescalingSpec::new(theta)?;
        let rho_theta = spec.kernel(kernel);
        let sigma_theta = spec.sigma(sigma);
        let batch_stream = root.substream(1 + ti as u64);

        let samples = parallel_samples(n, |rep| {
            let rs = batch_stream.substream(rep as u64);
            let nu = sdsm_sample_at(
                source,
                &rho_theta,
                &sigma_theta,
                cfg.cutoff,
                cfg.t,
                cfg.step,
                &rs,
            )?;
            let mut vals: Vec<f64> = cfg
                .phis
                .iter()
                .map(|phi| nu.integrate(|x| phi.eval(x)))
                .collect();
            if let Some(gap) = pair_gap {
                let mut ps = rs.substream(u64::MAX);
                let mut walker = SibmWalker::new(&[0.0, gap], &rho_theta, cfg.step);
                let n_full = (cfg.t / cfg.step + 1e-9).floor() as usize;
                let rem = cfg.t - n_full as f64 * cfg.step;
                for sub in 0..n_full + 1 {
                    let dt = if sub < n_full { cfg.step } else { rem };
                    if dt > 1e-12 * cfg.step {
                        walker.step(dt, &mut ps)?;
                    }
                }
                let d = (walker.label_position(1) - walker.label_position(0)).abs();
                vals.push(if d < ABSORPTION_RESOLUTION { 0.0 } else { d });
            }
            Ok(vals)
        })?;

        for (pi, phi) in cfg.phis.iter().enumerate() {
            let a: Vec<f64> = samples.iter().map(|v| v[pi]).collect();
            let b: Vec<f64> = baseline.iter().map(|v| v[pi]).collect();
            let ks = ks_two_sample(&a, &b)?;
            rows.push(ConvergenceRow {
                theta,
                phi_id: phi.id(),
                ks: ks.statistic,
                n,
                seed: cfg.seed,
            });
        }
        if let Some(gap) = pair_gap {
            let d: Vec<f64> = samples.iter().map(|v| *v.last().unwrap()).collect();
            let ks = crate::stats::ks_one_sample_mixed(
                &d,
                |y| absorbed_difference_cdf(gap, 2.0 * rho0, cfg.t, y),
                |y| absorbed_difference_cdf_left(gap, 2.0 * rho0, cfg.t, y),
            )?;
            rows.push(ConvergenceRow {
                theta,
                phi_id: "pair_distance".into(),
                ks: ks.statistic,
                n,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}
