//! The superprocess with coalescing spatial motion: finitely many atoms
//! whose carriers form a coalescing Brownian system and whose masses are
//! independent Feller branching diffusions run on position-dependent
//! internal clocks `psi_i(t) = integral sigma(y_i(s)) ds`.
//!
//! Two constructions are provided: directly from a finite atomic initial
//! state, and from a general initial measure through a Poisson ensemble of
//! excursions truncated at internal cutoff `inf(sigma) * r`, which has the
//! law of the process restricted to times `t >= r`. Masses advance by
//! exact Feller transitions over per-step clock increments, so the only
//! discretization error is the O(dt) clock quadrature.

use crate::branching::{feller_sample_exact, sample_excursion_ensemble, BranchingRate};
use crate::error::{Error, Result};
use crate::flows::scbm::CoalescingWalker;
use crate::flows::simulate_scbm;
use crate::measure::{AtomicMeasure, SourceMeasure};
use crate::rng::RngStream;
use crate::testfn::TestFunction;

pub(crate) const STREAM_CARRIERS: u64 = 0;
pub(crate) const STREAM_MASSES: u64 = 1;
pub(crate) const STREAM_ENSEMBLE: u64 = 2;

/// One atom of a measure-valued path: its carrier trajectory, mass
/// trajectory, carrier-group provenance and realized internal clock, all
/// on the output grid.
#[derive(Debug, Clone)]
pub struct AtomTrack {
    pub label: u32,
    /// Birth location of the carrier.
    pub location: f64,
    pub positions: Vec<f64>,
    pub masses: Vec<f64>,
    /// Representative carrier label per grid time; two atoms whose groups
    /// agree ride the same carrier from that time on.
    pub groups: Vec<u32>,
    /// First output grid time with zero mass.
    pub death_time: Option<f64>,
    /// Internal clock `psi` at the output grid times.
    pub clock: Vec<f64>,
}

/// A measure-valued trajectory on a uniform grid.
#[derive(Debug, Clone)]
pub struct MeasurePath {
    pub times: Vec<f64>,
    pub atoms: Vec<AtomTrack>,
    /// Carrier speed `rho` (used by the martingale functional).
    pub speed: f64,
    /// When set, dead atoms are dropped from emitted measures; otherwise
    /// they are retained with mass zero (exact atom-count statistics).
    pub prune_dead: bool,
}

impl MeasurePath {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// The atomic measure at grid index `k`, honoring the pruning flag.
    pub fn measure_at(&self, k: usize) -> AtomicMeasure {
        let atoms: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .filter(|a| !self.prune_dead || a.masses[k] > 0.0)
            .map(|a| (a.positions[k], a.masses[k]))
            .collect();
        AtomicMeasure::new(atoms).expect("simulated atoms are valid")
    }

    /// Number of atoms carried at grid index `k` (all retained atoms, or
    /// only the live ones when pruning).
    pub fn atom_count_at(&self, k: usize) -> usize {
        self.atoms
            .iter()
            .filter(|a| !self.prune_dead || a.masses[k] > 0.0)
            .count()
    }

    /// Number of strictly positive masses at grid index `k`.
    pub fn live_atom_count_at(&self, k: usize) -> usize {
        self.atoms.iter().filter(|a| a.masses[k] > 0.0).count()
    }

    pub fn total_mass_at(&self, k: usize) -> f64 {
        self.atoms.iter().map(|a| a.masses[k]).sum()
    }

    pub fn integrate_at(&self, k: usize, phi: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.masses[k] * phi(a.positions[k]))
            .sum()
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
            "horizon must cover at least one step, got {horizon}"
        )));
    }
    Ok(((horizon / step).round() as usize).max(1))
}

/// Cumulative trapezoidal clock `psi` of one carrier path.
fn cumulative_clock(path: &[f64], step: f64, sigma: &BranchingRate) -> Vec<f64> {
    let mut clock = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    clock.push(0.0);
    let mut prev = sigma.eval(path[0]);
    for &pos in &path[1..] {
        let cur = sigma.eval(pos);
        acc += 0.5 * step * (prev + cur);
        clock.push(acc);
        prev = cur;
    }
    clock
}

/// Simulate the atomic-initial-state process `sum_i xi_i(t) delta_{y_i(t)}`
/// from atoms `(b_i, xi_i)`: carriers are a coalescing system of the given
/// speed, masses are independent Feller diffusions on the carriers'
/// internal clocks. Carrier and mass randomness are independent.
pub fn simulate_scsm_atomic(
    atoms: &[(f64, f64)],
    sigma: &BranchingRate,
    speed: f64,
    horizon: f64,
    step: f64,
    prune_dead: bool,
    stream: &RngStream,
) -> Result<MeasurePath> {
    if atoms.is_empty() {
        return Err(Error::parameter("need at least one atom"));
    }
    for &(pos, mass) in atoms {
        if !pos.is_finite() || !mass.is_finite() || mass < 0.0 {
            return Err(Error::parameter(
                "atoms need finite positions and masses >= 0",
            ));
        }
    }
    sigma.require_positive_infimum()?;
    let n_steps = validate_grid(horizon, step)?;

    let locations: Vec<f64> = atoms.iter().map(|&(b, _)| b).collect();
    let mut carrier_stream = stream.substream(STREAM_CARRIERS);
    let bundle = simulate_scbm(&locations, speed, horizon, step, &mut carrier_stream)?;
    let mut mass_stream = stream.substream(STREAM_MASSES);

    let times = bundle.times();
    let mut tracks = Vec::with_capacity(atoms.len());
    for (i, &(location, xi)) in atoms.iter().enumerate() {
        let positions = bundle.path(i).to_vec();
        let clock = cumulative_clock(&positions, step, sigma);
        let mut masses = Vec::with_capacity(n_steps + 1);
        let mut mass = xi;
        masses.push(mass);
        let mut death_time = if mass == 0.0 { Some(0.0) } else { None };
        for k in 0..n_steps {
            let dpsi = clock[k + 1] - clock[k];
            mass = feller_sample_exact(mass, dpsi, &mut mass_stream)?;
            masses.push(mass);
            if mass == 0.0 && death_time.is_none() {
                death_time = Some(times[k + 1]);
            }
        }
        let groups = (0..=n_steps).map(|k| bundle.group(k, i)).collect();
        tracks.push(AtomTrack {
            label: i as u32,
            location,
            positions,
            masses,
            groups,
            death_time,
            clock,
        });
    }

    Ok(MeasurePath {
        times,
        atoms: tracks,
        speed,
        prune_dead,
    })
}

/// Simulate the process from a general initial measure via the excursion
/// ensemble truncated at internal cutoff `inf(sigma) * cutoff`; the
/// returned path lives on the grid times in `[cutoff, horizon]` and has
/// the law of the process restricted to that window. An empty ensemble
/// yields a valid all-zero path.
#[allow(clippy::too_many_arguments)]
pub fn simulate_scsm_general(
    source: &SourceMeasure,
    sigma: &BranchingRate,
    speed: f64,
    cutoff: f64,
    horizon: f64,
    step: f64,
    prune_dead: bool,
    stream: &RngStream,
) -> Result<MeasurePath> {
    let eps = sigma.require_positive_infimum()?;
    if !(cutoff > 0.0) || !(horizon > cutoff) {
        return Err(Error::parameter("need 0 < cutoff < horizon"));
    }
    let n_steps = validate_grid(horizon, step)?;
    let start_idx = ((cutoff / step - 1e-9).ceil() as usize).min(n_steps);
    let times: Vec<f64> = (start_idx..=n_steps).map(|k| k as f64 * step).collect();

    let internal_cutoff = eps * cutoff;
    let mut ensemble_stream = stream.substream(STREAM_ENSEMBLE);
    let seeds = sample_excursion_ensemble(source, internal_cutoff, &mut ensemble_stream)?;
    if seeds.is_empty() {
        return Ok(MeasurePath {
            times,
            atoms: Vec::new(),
            speed,
            prune_dead,
        });
    }

    let locations: Vec<f64> = seeds.iter().map(|s| s.location).collect();
    let mut carrier_stream = stream.substream(STREAM_CARRIERS);
    let bundle = simulate_scbm(&locations, speed, horizon, step, &mut carrier_stream)?;
    let mut mass_stream = stream.substream(STREAM_MASSES);

    let mut tracks = Vec::with_capacity(seeds.len());
    for (i, seed) in seeds.iter().enumerate() {
        let full_clock = cumulative_clock(bundle.path(i), step, sigma);
        let mut masses = Vec::with_capacity(times.len());
        let mut death_time = None;
        let mut mass = seed.initial_mass;
        let mut internal = internal_cutoff;
        for (out_idx, k) in (start_idx..=n_steps).enumerate() {
            let target = full_clock[k];
            debug_assert!(
                target >= internal_cutoff - 1e-9,
                "clock below internal cutoff at an output time"
            );
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
        let positions = bundle.path(i)[start_idx..].to_vec();
        let groups = (start_idx..=n_steps).map(|k| bundle.group(k, i)).collect();
        let clock = full_clock[start_idx..].to_vec();
        tracks.push(AtomTrack {
            label: i as u32,
            location: seed.location,
            positions,
            masses,
            groups,
            death_time,
            clock,
        });
    }

    Ok(MeasurePath {
        times,
        atoms: tracks,
        speed,
        prune_dead,
    })
}

/// One draw of the atomic-initial-state process at a single time, without
/// recording a full path: carriers walk to `t`, masses take one exact
/// transition over the accumulated clock.
pub fn scsm_sample_atomic_at(
    atoms: &[(f64, f64)],
    sigma: &BranchingRate,
    speed: f64,
    t: f64,
    step: f64,
    stream: &RngStream,
) -> Result<AtomicMeasure> {
    if atoms.is_empty() {
        return Err(Error::parameter("need at least one atom"));
    }
    sigma.require_positive_infimum()?;
    if !(t > 0.0) || !(step > 0.0) {
        return Err(Error::parameter("need t > 0 and step > 0"));
    }
    let locations: Vec<f64> = atoms.iter().map(|&(b, _)| b).collect();
    let mut carrier_stream = stream.substream(STREAM_CARRIERS);
    let mut walker = CoalescingWalker::new(&locations, speed);
    let n = locations.len();
    let mut clocks = vec![0.0f64; n];
    let mut sig_prev: Vec<f64> = locations.iter().map(|&x| sigma.eval(x)).collect();

    let n_full = (t / step + 1e-9).floor() as usize;
    let remainder = t - n_full as f64 * step;
    for sub in 0..n_full + 1 {
        let dt = if sub < n_full { step } else { remainder };
        if dt <= 1e-12 * step {
            continue;
        }
        walker.step(dt, &mut carrier_stream);
        for i in 0..n {
            let cur = sigma.eval(walker.label_position(i));
            clocks[i] += 0.5 * dt * (sig_prev[i] + cur);
            sig_prev[i] = cur;
        }
    }

    let mut mass_stream = stream.substream(STREAM_MASSES);
    let mut out = Vec::with_capacity(n);
    for (i, &(_, xi)) in atoms.iter().enumerate() {
        let mass = if clocks[i] > 0.0 {
            feller_sample_exact(xi, clocks[i], &mut mass_stream)?
        } else {
            xi
        };
        if mass > 0.0 {
            out.push((walker.label_position(i), mass));
        }
    }
    AtomicMeasure::new(out)
}

/// Single-time draw of the general-initial-state process (valid for
/// `t >= cutoff`), via the truncated excursion ensemble.
pub fn scsm_sample_general_at(
    source: &SourceMeasure,
    sigma: &BranchingRate,
    speed: f64,
    cutoff: f64,
    t: f64,
    step: f64,
    stream: &RngStream,
) -> Result<AtomicMeasure> {
    let eps = sigma.require_positive_infimum()?;
    if !(cutoff > 0.0) || !(t >= cutoff) {
        return Err(Error::parameter("need 0 < cutoff <= t"));
    }
    if !(step > 0.0) {
        return Err(Error::parameter("need step > 0"));
    }
    let internal_cutoff = eps * cutoff;
    let mut ensemble_stream = stream.substream(STREAM_ENSEMBLE);
    let seeds = sample_excursion_ensemble(source, internal_cutoff, &mut ensemble_stream)?;
    if seeds.is_empty() {
        return Ok(AtomicMeasure::empty());
    }
    let locations: Vec<f64> = seeds.iter().map(|s| s.location).collect();
    let mut carrier_stream = stream.substream(STREAM_CARRIERS);
    let mut walker = CoalescingWalker::new(&locations, speed);
    let n = locations.len();
    let mut clocks = vec![0.0f64; n];
    let mut sig_prev: Vec<f64> = locations.iter().map(|&x| sigma.eval(x)).collect();

    let n_full = (t / step + 1e-9).floor() as usize;
    let remainder = t - n_full as f64 * step;
    for sub in 0..n_full + 1 {
        let dt = if sub < n_full { step } else { remainder };
        if dt <= 1e-12 * step {
            continue;
        }
        walker.step(dt, &mut carrier_stream);
        for i in 0..n {
            let cur = sigma.eval(walker.label_position(i));
            clocks[i] += 0.5 * dt * (sig_prev[i] + cur);
            sig_prev[i] = cur;
        }
    }

    let mut mass_stream = stream.substream(STREAM_MASSES);
    let mut out = Vec::with_capacity(n);
    for (i, seed) in seeds.iter().enumerate() {
        let dpsi = (clocks[i] - internal_cutoff).max(0.0);
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

/// The compensated series
/// `M_t(phi) = <phi, X_t> - <phi, X_0> - (rho/2) int <phi'', X_s> ds`,
/// one value per grid time (trapezoidal integral). For paths restricted
/// to `[r, T]` the series is taken relative to the first recorded time.
pub fn martingale_functional(path: &MeasurePath, phi: &TestFunction) -> Vec<f64> {
    let n = path.n_times();
    let step = path.step();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let phi0 = path.integrate_at(0, |x| phi.eval(x));
    let mut integral = 0.0;
    let mut prev_dd = path.integrate_at(0, |x| phi.d2(x));
    out.push(0.0);
    for k in 1..n {
        let cur_dd = path.integrate_at(k, |x| phi.d2(x));
        integral += 0.5 * step * (prev_dd + cur_dd);
        prev_dd = cur_dd;
        let value = path.integrate_at(k, |x| phi.eval(x)) - phi0 - 0.5 * path.speed * integral;
        out.push(value);
    }
    out
}

/// The predicted quadratic variation of `M(phi)`:
/// `int <sigma phi^2, X_s> ds + int ds sum over coalesced carrier pairs
/// (including i = j) of m_i m_j phi'(x_i) phi'(x_j)`.
/// Membership in the diagonal term is decided by carrier provenance, not
/// floating-point position equality.
pub fn qv_predicted(path: &MeasurePath, phi: &TestFunction, sigma: &BranchingRate) -> Vec<f64> {
    let n = path.n_times();
    let step = path.step();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }

    let integrand = |k: usize| -> f64 {
        let branch: f64 = path
            .atoms
            .iter()
            .map(|a| {
                let p = phi.eval(a.positions[k]);
                a.masses[k] * sigma.eval(a.positions[k]) * p * p
            })
            .sum();
        // diagonal term: group atoms by carrier representative and square
        // the group sums of m * phi'
        let mut reps: Vec<(u32, f64)> = Vec::with_capacity(path.atoms.len());
        for a in &path.atoms {
            let g = a.groups[k];
            let contrib = a.masses[k] * phi.d1(a.positions[k]);
            match reps.iter_mut().find(|(rep, _)| *rep == g) {
                Some((_, acc)) => *acc += contrib,
                None => reps.push((g, contrib)),
            }
        }
        let diagonal: f64 = reps.iter().map(|&(_, s)| s * s).sum();
        branch + diagonal
    };

    let mut acc = 0.0;
    let mut prev = integrand(0);
    out.push(0.0);
    for k in 1..n {
        let cur = integrand(k);
        acc += 0.5 * step * (prev + cur);
        prev = cur;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn const_sigma(v: f64) -> BranchingRate {
        BranchingRate::constant(v).unwrap()
    }

    #[test]
    fn single_atom_total_mass_is_feller() {
        // n = 1, sigma = 1: clock is the identity, so the total mass at t
        // must match the exact transition law
        let (t_end, dt) = (0.5, 5e-3);
        let n = 10_000;
        let sigma = const_sigma(1.0);
        let mut sim = Vec::with_capacity(n);
        let mut exact = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(70, k as u64);
            let path = simulate_scsm_atomic(&[(0.0, 1.0)], &sigma, 2.0, t_end, dt, false, &stream)
                .unwrap();
            sim.push(path.total_mass_at(path.n_times() - 1));
            let mut s2 = RngStream::new(71, k as u64);
            exact.push(feller_sample_exact(1.0, t_end, &mut s2).unwrap());
        }
        let ks = stats::ks_two_sample(&sim, &exact).unwrap();
        assert!(ks.statistic < 0.02, "KS = {}", ks.statistic);
    }

    #[test]
    fn total_mass_is_a_martingale() {
        let sigma = const_sigma(1.0);
        let n = 4000;
        let atoms = [(-1.0, 1.0), (0.5, 0.5), (0.5, 1.5)];
        let total: f64 = 3.0;
        let mut curves = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(72, k as u64);
            let path =
                simulate_scsm_atomic(&atoms, &sigma, 1.0, 0.5, 1e-2, false, &stream).unwrap();
            curves.push(
                (0..path.n_times())
                    .map(|j| path.total_mass_at(j))
                    .collect::<Vec<f64>>(),
            );
        }
        let z = stats::martingale_ztest(&curves).unwrap();
        assert!(!z.hard_fail(4.0), "max |z| = {}", z.max_abs_z);
        let final_vals: Vec<f64> = curves.iter().map(|c| *c.last().unwrap()).collect();
        let est = stats::mean_se(&final_vals);
        assert!(est.z_to(total).abs() < 3.0, "mean = {}", est.value);
    }

    #[test]
    fn coincident_atoms_share_carriers_but_not_masses() {
        let sigma = const_sigma(1.0);
        let stream = RngStream::new(73, 0);
        let path = simulate_scsm_atomic(
            &[(0.3, 1.0), (0.3, 2.0)],
            &sigma,
            1.0,
            0.5,
            1e-2,
            false,
            &stream,
        )
        .unwrap();
        for k in 0..path.n_times() {
            assert_eq!(path.atoms[0].positions[k], path.atoms[1].positions[k]);
            assert_eq!(path.atoms[0].groups[k], path.atoms[1].groups[k]);
        }

        // masses stay independent: zero cross-variation within noise
        let n = 4000;
        let mut cross = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(74, k as u64);
            let path = simulate_scsm_atomic(
                &[(0.3, 1.0), (0.3, 2.0)],
                &sigma,
                1.0,
                0.5,
                1e-2,
                false,
                &stream,
            )
            .unwrap();
            let a = &path.atoms[0].masses;
            let b = &path.atoms[1].masses;
            cross.push(*crate::stats::realized_covariation(a, b).last().unwrap());
        }
        let est = stats::mean_se(&cross);
        assert!(est.z_to(0.0).abs() < 3.0, "cross-qv z = {}", est.z_to(0.0));
    }

    #[test]
    fn second_moment_growth_matches_qv_of_total_mass() {
        // constant sigma: E <1, X_t>^2 = <1, mu>^2 + sigma <1, mu> t
        let sigma0 = 1.3;
        let sigma = const_sigma(sigma0);
        let n = 10_000;
        let t_end = 0.4;
        let atoms = [(-1.0, 1.0), (1.0, 1.0)];
        let mut sq = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(75, k as u64);
            let mu = scsm_sample_atomic_at(&atoms, &sigma, 1.0, t_end, 1e-2, &stream).unwrap();
            let m = mu.total_mass();
            sq.push(m * m);
        }
        let est = stats::mean_se(&sq);
        let expected = 4.0 + sigma0 * 2.0 * t_end;
        assert!(
            est.z_to(expected).abs() < 3.0,
            "E m^2 = {} vs {expected}",
            est.value
        );
    }

    #[test]
    fn general_construction_atom_counts_and_mass() {
        // mu = delta_0 with mass 1, sigma = 1, r = 0.5: atom count at r is
        // Poisson(4); total mass at r has mean 1
        let sigma = const_sigma(1.0);
        let source = SourceMeasure::atomic(AtomicMeasure::delta(0.0, 1.0).unwrap());
        let n = 4000;
        let mut counts = Vec::with_capacity(n);
        let mut masses = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(76, k as u64);
            let path = simulate_scsm_general(&source, &sigma, 1.0, 0.5, 0.6, 0.05, false, &stream)
                .unwrap();
            assert!((path.times[0] - 0.5).abs() < 1e-12);
            counts.push(path.live_atom_count_at(0) as u64);
            masses.push(path.total_mass_at(0));
        }
        let gof = stats::poisson_gof(&counts, 4.0).unwrap();
        assert!(gof.p_value > 0.001, "p = {}", gof.p_value);
        let est = stats::mean_se(&masses);
        assert!(est.z_to(1.0).abs() < 3.0, "mean mass = {}", est.value);
    }

    #[test]
    fn atom_count_never_increases_after_cutoff() {
        let sigma = const_sigma(1.0);
        let source = SourceMeasure::atomic(AtomicMeasure::delta(0.0, 1.0).unwrap());
        for k in 0..50 {
            let stream = RngStream::new(77, k as u64);
            let path = simulate_scsm_general(&source, &sigma, 1.0, 0.2, 1.0, 0.02, false, &stream)
                .unwrap();
            let mut prev = usize::MAX;
            for j in 0..path.n_times() {
                let alive = path.live_atom_count_at(j);
                assert!(alive <= prev, "atom count grew at index {j}");
                prev = alive;
            }
        }
    }

    #[test]
    fn total_mass_law_ignores_carrier_speed() {
        let sigma = const_sigma(1.0);
        let source = SourceMeasure::atomic(AtomicMeasure::delta(0.0, 1.0).unwrap());
        let n = 10_000;
        let mut slow = Vec::with_capacity(n);
        let mut fast = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(78, k as u64);
            let a = scsm_sample_general_at(&source, &sigma, 0.5, 0.2, 0.6, 0.02, &stream).unwrap();
            slow.push(a.total_mass());
            let stream = RngStream::new(79, k as u64);
            let b = scsm_sample_general_at(&source, &sigma, 5.0, 0.2, 0.6, 0.02, &stream).unwrap();
            fast.push(b.total_mass());
        }
        let ks = stats::ks_two_sample(&slow, &fast).unwrap();
        assert!(ks.statistic < 0.02, "KS = {}", ks.statistic);
    }

    #[test]
    fn martingale_functional_constant_phi_is_mass_difference() {
        let sigma = const_sigma(1.0);
        let stream = RngStream::new(80, 0);
        let path = simulate_scsm_atomic(
            &[(0.0, 1.0), (1.0, 2.0)],
            &sigma,
            1.0,
            0.5,
            1e-2,
            false,
            &stream,
        )
        .unwrap();
        let m = martingale_functional(&path, &TestFunction::One);
        for (k, &mk) in m.iter().enumerate() {
            let expected = path.total_mass_at(k) - path.total_mass_at(0);
            assert!((mk - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn martingale_functional_is_centered_with_uncorrelated_increments() {
        let sigma = const_sigma(1.0);
        let atoms = [(-0.5, 1.0), (0.5, 1.0)];
        let n = 4000;
        let phi = TestFunction::SinX;
        let mut finals = Vec::with_capacity(n);
        let mut mid_and_incr = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(81, k as u64);
            let path =
                simulate_scsm_atomic(&atoms, &sigma, 1.0, 0.5, 1e-2, false, &stream).unwrap();
            let m = martingale_functional(&path, &phi);
            let mid = m[m.len() / 2];
            let last = *m.last().unwrap();
            finals.push(last);
            mid_and_incr.push((mid, last - mid));
        }
        let est = stats::mean_se(&finals);
        assert!(est.z_to(0.0).abs() < 3.0, "mean M_T = {}", est.value);

        // martingale orthogonality: corr(M_t, M_T - M_t) is noise
        let mean_mid = mid_and_incr.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let mean_inc = mid_and_incr.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        for &(a, b) in &mid_and_incr {
            cov += (a - mean_mid) * (b - mean_inc);
            var_a += (a - mean_mid) * (a - mean_mid);
            var_b += (b - mean_inc) * (b - mean_inc);
        }
        let corr = cov / (var_a.sqrt() * var_b.sqrt());
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn predicted_qv_matches_realized_qv_with_active_diagonal() {
        // two atoms with a common start: the diagonal term is active from
        // time zero
        let sigma = const_sigma(1.0);
        let atoms = [(0.0, 1.0), (0.0, 1.0)];
        let phi = TestFunction::SinX;
        let n = 4000;
        let mut diffs = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(82, k as u64);
            let path =
                simulate_scsm_atomic(&atoms, &sigma, 1.0, 0.4, 5e-3, false, &stream).unwrap();
            let m = martingale_functional(&path, &phi);
            let realized = *stats::realized_qv(&m).last().unwrap();
            let predicted = *qv_predicted(&path, &phi, &sigma).last().unwrap();
            diffs.push(realized - predicted);
        }
        let est = stats::mean_se(&diffs);
        assert!(
            est.z_to(0.0).abs() < 3.0,
            "qv mismatch: mean diff = {} (se {})",
            est.value,
            est.se
        );
    }

    #[test]
    fn predicted_qv_without_cross_pairs_for_separated_atoms() {
        // far-apart atoms over a short horizon: only i = j terms remain
        let sigma = const_sigma(1.0);
        let atoms = [(-8.0, 1.0), (8.0, 1.0)];
        let phi = TestFunction::SinX;
        let stream = RngStream::new(83, 0);
        let path = simulate_scsm_atomic(&atoms, &sigma, 1.0, 0.1, 1e-2, false, &stream).unwrap();
        let qv = qv_predicted(&path, &phi, &sigma);
        // recompute with the diagonal restricted to i = j only
        let n = path.n_times();
        let step = path.step();
        let mut acc = 0.0;
        let own = |k: usize| -> f64 {
            path.atoms
                .iter()
                .map(|a| {
                    let p = phi.eval(a.positions[k]);
                    let d = a.masses[k] * phi.d1(a.positions[k]);
                    a.masses[k] * sigma.eval(a.positions[k]) * p * p + d * d
                })
                .sum()
        };
        let mut prev = own(0);
        for k in 1..n {
            let cur = own(k);
            acc += 0.5 * step * (prev + cur);
            prev = cur;
        }
        assert!(
            (qv[n - 1] - acc).abs() < 1e-12,
            "carriers merged unexpectedly"
        );
    }

    #[test]
    fn realized_qv_of_mass_martingale_matches_expected_occupation() {
        // single atom, sigma = 1: E [M(1)]_T = integral E <1, X_s> ds
        // = <1, X_0> T by the mass martingale
        let sigma = const_sigma(1.0);
        let (x0, t_end, dt) = (1.5, 0.5, 5e-3);
        let n = 3000;
        let mut totals = Vec::with_capacity(n);
        for k in 0..n {
            let stream = RngStream::new(86, k as u64);
            let path =
                simulate_scsm_atomic(&[(0.0, x0)], &sigma, 1.0, t_end, dt, false, &stream)
                    .unwrap();
            let m = martingale_functional(&path, &TestFunction::One);
            totals.push(*stats::realized_qv(&m).last().unwrap());
        }
        let est = stats::mean_se(&totals);
        assert!(
            est.z_to(x0 * t_end).abs() < 3.0,
            "qv = {} vs {}",
            est.value,
            x0 * t_end
        );
    }

    #[test]
    fn unbounded_below_sigma_is_rejected() {
        let bad = BranchingRate::constant(0.0).unwrap();
        let stream = RngStream::new(84, 0);
        let err = simulate_scsm_atomic(&[(0.0, 1.0)], &bad, 1.0, 0.1, 1e-2, false, &stream);
        assert!(matches!(err, Err(Error::ModelViolation(_))));
    }

    #[test]
    fn pruning_flag_controls_emitted_atoms() {
        let sigma = const_sigma(4.0);
        let stream = RngStream::new(85, 0);
        let mut path =
            simulate_scsm_atomic(&[(0.0, 0.05)], &sigma, 1.0, 1.0, 1e-2, false, &stream).unwrap();
        let last = path.n_times() - 1;
        // tiny initial mass at high branching rate dies quickly
        assert_eq!(path.total_mass_at(last), 0.0, "mass should be extinct");
        assert_eq!(path.atom_count_at(last), 1);
        assert_eq!(path.measure_at(last).len(), 1);
        path.prune_dead = true;
        assert_eq!(path.atom_count_at(last), 0);
        assert_eq!(path.measure_at(last).len(), 0);
    }
}
