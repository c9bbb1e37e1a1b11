//! The standard Feller branching diffusion (quadratic variation
//! `xi(t) dt`), its exact transition sampler, the excursion law with
//! entrance density `kappa_t(dy) = 4 t^-2 exp(-2y/t) dy`, Poisson
//! excursion ensembles, and position-dependent time changes.
//!
//! The exact transition out of mass `x` over duration `t` is a
//! Poisson(2x/t) mixture of Gamma(shape N, scale t/2) masses, which
//! realizes the Laplace transform `exp(-x lambda / (1 + lambda t / 2))`;
//! zero is absorbing. An Euler scheme is kept purely as an independent
//! check of the exact sampler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::SourceMeasure;
use crate::rng::RngStream;

// ---------------------------------------------------------------------
// Branching rates
// ---------------------------------------------------------------------

/// A named positive branching-rate function `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BranchingRate {
    Const {
        value: f64,
    },
    /// `sigma(x) = base + amp * exp(-(squeeze x)^2)`.
    GaussBump {
        base: f64,
        amp: f64,
        squeeze: f64,
    },
}

impl BranchingRate {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::parameter("branching rate must be finite"));
        }
        Ok(BranchingRate::Const { value })
    }

    pub fn gauss_bump(base: f64, amp: f64) -> Result<Self> {
        if !base.is_finite() || !amp.is_finite() || amp < 0.0 {
            return Err(Error::parameter(
                "gauss bump rate needs finite base and amp >= 0",
            ));
        }
        Ok(BranchingRate::GaussBump {
            base,
            amp,
            squeeze: 1.0,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BranchingRate::Const { value } => value,
            BranchingRate::GaussBump { base, amp, squeeze } => {
                let u = squeeze * x;
                base + amp * (-u * u).exp()
            }
        }
    }

    /// Greatest lower bound of `sigma` over the line.
    pub fn infimum(&self) -> f64 {
        match *self {
            BranchingRate::Const { value } => value,
            BranchingRate::GaussBump { base, .. } => base,
        }
    }

    /// `lim sigma(x)` as `|x| -> infinity`.
    pub fn limit_at_infinity(&self) -> f64 {
        match *self {
            BranchingRate::Const { value } => value,
            BranchingRate::GaussBump { base, .. } => base,
        }
    }

    /// The space-squeezed rate `sigma_theta(x) = sigma(theta x)`.
    pub fn scale_space(&self, theta: f64) -> Self {
        match *self {
            BranchingRate::Const { value } => BranchingRate::Const { value },
            BranchingRate::GaussBump { base, amp, squeeze } => BranchingRate::GaussBump {
                base,
                amp,
                squeeze: squeeze * theta,
            },
        }
    }

    /// Model hypothesis for the superprocess constructions.
    pub fn require_positive_infimum(&self) -> Result<f64> {
        let eps = self.infimum();
        if eps > 0.0 {
            Ok(eps)
        } else {
            Err(Error::model(format!(
                "branching rate must be bounded below by a positive constant, infimum = {eps}"
            )))
        }
    }
}

// ---------------------------------------------------------------------
// Exact Feller transitions
// ---------------------------------------------------------------------

/// Exact draw from the Feller transition `q_t(x, .)`: `N ~ Poisson(2x/t)`,
/// zero if `N = 0`, else `Gamma(N, t/2)`. Zero is absorbing.
pub fn feller_sample_exact(x: f64, t: f64, stream: &mut RngStream) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::parameter(format!(
            "feller mass must be >= 0, got {x}"
        )));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::parameter(format!(
            "feller transition time must be > 0, got {t}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let n = stream.draw_poisson(2.0 * x / t)?;
    if n == 0 {
        Ok(0.0)
    } else {
        stream.draw_gamma(n as f64, t / 2.0)
    }
}

/// Euler scheme for the same diffusion, `xi <- max(0, xi + sqrt(xi dt) Z)`,
/// retained solely as an independent oracle for the exact sampler.
pub fn feller_path_euler(
    x: f64,
    horizon: f64,
    step: f64,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::parameter(format!(
            "feller mass must be >= 0, got {x}"
        )));
    }
    if !(step > 0.0) || !(horizon >= step) {
        return Err(Error::parameter("need step > 0 and horizon >= one step"));
    }
    let n = ((horizon / step).round() as usize).max(1);
    let mut path = Vec::with_capacity(n + 1);
    let mut xi = x;
    path.push(xi);
    for _ in 0..n {
        if xi > 0.0 {
            xi = (xi + (xi * step).sqrt() * stream.standard_normal()).max(0.0);
        }
        path.push(xi);
    }
    Ok(path)
}

// ---------------------------------------------------------------------
// Excursions
// ---------------------------------------------------------------------

/// Total excursion-law mass of the survivors past `cutoff`:
/// `Q_kappa({tau_0 > r}) = 2 / r`.
pub fn surviving_excursion_mass(cutoff: f64) -> f64 {
    2.0 / cutoff
}

/// One excursion conditioned to survive past `cutoff`, recorded on the
/// internal grid `cutoff, cutoff + step, ..., horizon`.
#[derive(Debug, Clone)]
pub struct ExcursionPath {
    pub cutoff: f64,
    pub step: f64,
    /// Mass at `cutoff + k * step`.
    pub masses: Vec<f64>,
    /// First grid time with zero mass, if extinction happened in view.
    pub death_time: Option<f64>,
}

impl ExcursionPath {
    pub fn times(&self) -> Vec<f64> {
        (0..self.masses.len())
            .map(|k| self.cutoff + k as f64 * self.step)
            .collect()
    }

    pub fn alive_at(&self, t: f64) -> bool {
        match self.death_time {
            Some(d) => t < d,
            None => true,
        }
    }
}

/// Sample from the excursion law conditioned on `{tau_0 > cutoff}`: the
/// mass at the cutoff follows the normalized entrance law, an Exponential
/// with mean `cutoff / 2`, and evolves by exact Feller transitions.
pub fn excursion_conditioned(
    cutoff: f64,
    horizon: f64,
    step: f64,
    stream: &mut RngStream,
) -> Result<ExcursionPath> {
    if !(cutoff > 0.0) || !(horizon > cutoff) {
        return Err(Error::parameter("excursion needs 0 < cutoff < horizon"));
    }
    if !(step > 0.0) {
        return Err(Error::parameter("excursion step must be positive"));
    }
    let n = (((horizon - cutoff) / step).round() as usize).max(1);
    let mut masses = Vec::with_capacity(n + 1);
    let mut mass = stream.draw_exponential(cutoff / 2.0)?;
    masses.push(mass);
    let mut death_time = None;
    for k in 0..n {
        mass = feller_sample_exact(mass, step, stream)?;
        masses.push(mass);
        if mass == 0.0 && death_time.is_none() {
            death_time = Some(cutoff + (k + 1) as f64 * step);
        }
    }
    Ok(ExcursionPath {
        cutoff,
        step,
        masses,
        death_time,
    })
}

/// A spatial location paired with the conditioned initial mass of its
/// excursion at the ensemble cutoff.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExcursionSeed {
    pub location: f64,
    pub initial_mass: f64,
}

/// Poisson ensemble of excursions surviving past `cutoff`, for the initial
/// state `mu`: the count is Poisson(`<1, mu> * 2 / cutoff`), locations are
/// i.i.d. from the normalized `mu`, masses i.i.d. Exponential(mean
/// `cutoff / 2`). Atoms are returned sorted by descending mass (the death
/// times that order the ensemble exactly are only realized later).
pub fn sample_excursion_ensemble(
    source: &SourceMeasure,
    cutoff: f64,
    stream: &mut RngStream,
) -> Result<Vec<ExcursionSeed>> {
    source.validate()?;
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::parameter(format!(
            "ensemble cutoff must be positive, got {cutoff}"
        )));
    }
    let total = source.total_mass();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let count = stream.draw_poisson(total * surviving_excursion_mass(cutoff))?;
    let mut seeds = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let location = source.sample_location(stream);
        let initial_mass = stream.draw_exponential(cutoff / 2.0)?;
        seeds.push(ExcursionSeed {
            location,
            initial_mass,
        });
    }
    seeds.sort_unstable_by(|a, b| b.initial_mass.total_cmp(&a.initial_mass));
    Ok(seeds)
}

/// A realized excursion atom of an assembled superprocess: location, mass
/// path on the process grid, realized death time, and the internal clock
/// that drove it.
#[derive(Debug, Clone)]
pub struct ExcursionAtom {
    pub location: f64,
    pub mass_path: Vec<f64>,
    pub death_time: Option<f64>,
    /// Realized `psi(t) = integral of sigma along the carrier`, per grid
    /// time; non-decreasing, `clock[0] = 0`, and at least `inf sigma * t`.
    pub clock: Vec<f64>,
}

// ---------------------------------------------------------------------
// Time change
// ---------------------------------------------------------------------

/// Trapezoidal-rule evaluation of `psi(t) = integral_0^t sigma(y(s)) ds`
/// along a recorded position path on a uniform grid of the given step.
/// `sigma` must stay positive along the path.
pub fn time_change(path: &[f64], step: f64, sigma: &BranchingRate, t: f64) -> Result<f64> {
    if path.len() < 2 || !(step > 0.0) {
        return Err(Error::parameter("time_change needs >= 2 grid points"));
    }
    let horizon = (path.len() - 1) as f64 * step;
    if !(t >= 0.0) || t > horizon + 1e-9 * step {
        return Err(Error::parameter(format!(
            "time_change target {t} outside path horizon {horizon}"
        )));
    }
    let check = |x: f64| -> Result<f64> {
        let v = sigma.eval(x);
        if v <= 0.0 {
            Err(Error::model(format!(
                "branching rate evaluated to {v} <= 0 at position {x}"
            )))
        } else {
            Ok(v)
        }
    };
    let mut acc = 0.0;
    let full = ((t / step) + 1e-9).floor() as usize;
    let full = full.min(path.len() - 1);
    for k in 0..full {
        acc += 0.5 * step * (check(path[k])? + check(path[k + 1])?);
    }
    let rem = t - full as f64 * step;
    if rem > 1e-12 * step && full + 1 < path.len() {
        let frac = rem / step;
        let interp = path[full] * (1.0 - frac) + path[full + 1] * frac;
        acc += 0.5 * rem * (check(path[full])? + check(interp)?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::AtomicMeasure;
    use crate::stats;

    #[test]
    fn absorbing_zero() {
        let mut stream = RngStream::new(50, 0);
        assert_eq!(feller_sample_exact(0.0, 1.0, &mut stream).unwrap(), 0.0);
        let path = feller_path_euler(0.0, 1.0, 0.01, &mut stream).unwrap();
        assert!(path.iter().all(|&x| x == 0.0));
        assert!(feller_sample_exact(-1.0, 1.0, &mut stream).is_err());
    }

    #[test]
    fn exact_sampler_is_a_martingale_with_known_laplace_transform() {
        let n = 100_000;
        let (x, t) = (1.0, 1.0);
        let mut stream = RngStream::new(51, 0);
        let mut masses = Vec::with_capacity(n);
        for _ in 0..n {
            masses.push(feller_sample_exact(x, t, &mut stream).unwrap());
        }
        let mean = stats::mean_se(&masses);
        assert!(mean.z_to(x).abs() < 3.0, "mean = {}", mean.value);

        // E exp(-xi) = exp(-x/(1 + t/2)) = exp(-2/3)
        let lap: Vec<f64> = masses.iter().map(|&m| (-m).exp()).collect();
        let lap_est = stats::mean_se(&lap);
        let expected = (-2.0f64 / 3.0).exp();
        assert!(
            lap_est.z_to(expected).abs() < 3.0,
            "laplace = {} vs {expected}",
            lap_est.value
        );

        // extinction probability is the Poisson-zero branch
        let extinct = masses.iter().filter(|&&m| m == 0.0).count() as f64 / n as f64;
        let p = (-2.0 * x / t).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((extinct - p).abs() < 3.0 * se, "extinct = {extinct} vs {p}");
    }

    #[test]
    fn laplace_transform_grid() {
        // E exp(-lambda xi_t) = exp(-x lambda / (1 + lambda t / 2))
        let n = 10_000;
        for (i, &x) in [0.5, 1.0, 2.0].iter().enumerate() {
            for (j, &t) in [0.5, 1.0, 2.0].iter().enumerate() {
                for (k, &lambda) in [0.5, 1.0, 2.0].iter().enumerate() {
                    let mut stream = RngStream::new(52, (i * 9 + j * 3 + k) as u64);
                    let mut vals = Vec::with_capacity(n);
                    for _ in 0..n {
                        let m = feller_sample_exact(x, t, &mut stream).unwrap();
                        vals.push((-lambda * m).exp());
                    }
                    let est = stats::mean_se(&vals);
                    let expected = (-x * lambda / (1.0 + lambda * t / 2.0)).exp();
                    assert!(
                        est.z_to(expected).abs() < 4.0,
                        "x={x} t={t} lambda={lambda}: {} vs {expected}",
                        est.value
                    );
                }
            }
        }
    }

    #[test]
    fn extinction_probability_grid() {
        // P(xi_t = 0 | xi_0 = x) = exp(-2x/t)
        let n = 10_000;
        for (i, &x) in [0.5, 1.0, 2.0].iter().enumerate() {
            for (j, &t) in [0.5, 1.0, 2.0].iter().enumerate() {
                let mut stream = RngStream::new(61, (i * 3 + j) as u64);
                let mut extinct = 0usize;
                for _ in 0..n {
                    if feller_sample_exact(x, t, &mut stream).unwrap() == 0.0 {
                        extinct += 1;
                    }
                }
                let p_hat = extinct as f64 / n as f64;
                let p = (-2.0 * x / t).exp();
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!(
                    (p_hat - p).abs() < 3.0 * se.max(1e-4),
                    "x={x} t={t}: {p_hat} vs {p}"
                );
            }
        }
    }

    #[test]
    fn iterated_exact_transitions_keep_the_martingale_mean() {
        let n = 20_000;
        let x0 = 1.5;
        let steps = 5;
        let dt = 0.2;
        let mut sums = vec![0.0f64; steps];
        for rep in 0..n {
            let mut stream = RngStream::new(53, rep as u64);
            let mut m = x0;
            for (k, sum) in sums.iter_mut().enumerate() {
                m = feller_sample_exact(m, dt, &mut stream).unwrap();
                let _ = k;
                *sum += m;
            }
        }
        for (k, sum) in sums.iter().enumerate() {
            let mean = sum / n as f64;
            // Var(xi_t) = x t at each accumulated time
            let var = x0 * dt * (k + 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - x0).abs() < 3.0 * se,
                "step {k}: mean = {mean}, se = {se}"
            );
        }
    }

    #[test]
    fn euler_scheme_matches_known_variance() {
        let n = 4000;
        let (x, t_end, dt) = (1.0, 0.5, 1e-3);
        let mut ends = Vec::with_capacity(n);
        for rep in 0..n {
            let mut stream = RngStream::new(54, rep as u64);
            let path = feller_path_euler(x, t_end, dt, &mut stream).unwrap();
            ends.push(*path.last().unwrap());
        }
        let mean = stats::mean_se(&ends);
        assert!(mean.z_to(x).abs() < 3.0);
        let m = mean.value;
        let sq: Vec<f64> = ends.iter().map(|&e| (e - m) * (e - m)).collect();
        let var_est = stats::mean_se(&sq);
        assert!(
            var_est.z_to(x * t_end).abs() < 4.0,
            "var = {} vs {}",
            var_est.value,
            x * t_end
        );
    }

    #[test]
    fn conditioned_excursion_entrance_values() {
        assert_eq!(surviving_excursion_mass(0.5), 4.0);

        let n = 20_000;
        let r = 1.0;
        let mut stream = RngStream::new(55, 0);
        let mut starts = Vec::with_capacity(n);
        for _ in 0..n {
            let exc = excursion_conditioned(r, 1.5, 0.5, &mut stream).unwrap();
            starts.push(exc.masses[0]);
        }
        let est = stats::mean_se(&starts);
        assert!(est.z_to(r / 2.0).abs() < 3.0, "mean start = {}", est.value);
    }

    #[test]
    fn survival_odds_follow_the_entrance_law() {
        // P(tau_0 > s | tau_0 > r) = r / s
        let (r, s) = (0.5, 1.0);
        let n = 20_000;
        let mut stream = RngStream::new(56, 0);
        let mut alive = 0usize;
        for _ in 0..n {
            let exc = excursion_conditioned(r, s, 0.05, &mut stream).unwrap();
            if *exc.masses.last().unwrap() > 0.0 {
                alive += 1;
            }
        }
        let p_hat = alive as f64 / n as f64;
        let p = r / s;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((p_hat - p).abs() < 3.0 * se, "p_hat = {p_hat}");
    }

    #[test]
    fn entrance_law_is_consistent_in_time() {
        // cutoff r evolved to s, conditioned on survival, must match a
        // fresh conditioned draw at cutoff s (both are Exp(mean s/2))
        let (r, s) = (0.4, 0.8);
        let n = 10_000;
        let mut stream = RngStream::new(57, 0);
        let mut evolved = Vec::new();
        while evolved.len() < n {
            let exc = excursion_conditioned(r, s, (s - r) / 8.0, &mut stream).unwrap();
            let last = *exc.masses.last().unwrap();
            if last > 0.0 {
                evolved.push(last);
            }
        }
        let mut fresh = Vec::with_capacity(n);
        for _ in 0..n {
            fresh.push(
                excursion_conditioned(s, s + 0.1, 0.1, &mut stream)
                    .unwrap()
                    .masses[0],
            );
        }
        let ks = stats::ks_two_sample(&evolved, &fresh).unwrap();
        assert!(ks.statistic < 0.02, "KS = {}", ks.statistic);
    }

    #[test]
    fn ensemble_counts_and_masses() {
        let mu = SourceMeasure::atomic(AtomicMeasure::delta(0.0, 1.0).unwrap());
        let r = 0.1;
        let n = 10_000;
        let mut counts = Vec::with_capacity(n);
        let mut mass_sums = Vec::with_capacity(n);
        for k in 0..n {
            let mut stream = RngStream::new(58, k as u64);
            let seeds = sample_excursion_ensemble(&mu, r, &mut stream).unwrap();
            counts.push(seeds.len() as f64);
            mass_sums.push(seeds.iter().map(|s| s.initial_mass).sum::<f64>());
            // sorted by descending mass
            for w in seeds.windows(2) {
                assert!(w[0].initial_mass >= w[1].initial_mass);
            }
        }
        let count_est = stats::mean_se(&counts);
        assert!(
            count_est.z_to(20.0).abs() < 3.0,
            "count = {}",
            count_est.value
        );
        let mass_est = stats::mean_se(&mass_sums);
        assert!(mass_est.z_to(1.0).abs() < 3.0, "mass = {}", mass_est.value);
    }

    #[test]
    fn ensemble_degenerate_cases() {
        let two_delta = SourceMeasure::atomic(AtomicMeasure::delta(0.0, 2.0).unwrap());
        let mut stream = RngStream::new(59, 0);
        let seeds = sample_excursion_ensemble(&two_delta, 0.2, &mut stream).unwrap();
        assert!(seeds.iter().all(|s| s.location == 0.0));

        let empty = SourceMeasure::atomic(AtomicMeasure::empty());
        let seeds = sample_excursion_ensemble(&empty, 0.2, &mut stream).unwrap();
        assert!(seeds.is_empty());
    }

    #[test]
    fn time_change_constant_rate_is_exact() {
        let sigma = BranchingRate::constant(3.0).unwrap();
        let path = vec![0.0; 101];
        let psi = time_change(&path, 0.01, &sigma, 0.73).unwrap();
        assert!((psi - 3.0 * 0.73).abs() < 1e-12);
    }

    #[test]
    fn time_change_matches_quadrature_oracle() {
        // sigma(x) = 1 + exp(-x^2) along y(s) = s:
        // psi(1) = 1 + (sqrt(pi)/2) erf(1)
        let sigma = BranchingRate::gauss_bump(1.0, 1.0).unwrap();
        let dt = 1e-4;
        let n = 10_000;
        let path: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let psi = time_change(&path, dt, &sigma, 1.0).unwrap();
        let expected = 1.0 + (std::f64::consts::PI.sqrt() / 2.0) * libm::erf(1.0);
        assert!(
            (psi - expected).abs() < 1e-6,
            "psi = {psi}, expected = {expected}"
        );
    }

    #[test]
    fn time_change_respects_lower_bound_and_positivity() {
        let sigma = BranchingRate::gauss_bump(0.5, 1.0).unwrap();
        let mut stream = RngStream::new(60, 0);
        let mut path = vec![0.0];
        for _ in 0..200 {
            let last = *path.last().unwrap();
            path.push(last + stream.centered_gaussian(0.1));
        }
        for k in 1..=200 {
            let t = k as f64 * 0.01;
            let psi = time_change(&path, 0.01, &sigma, t).unwrap();
            assert!(psi >= 0.5 * t - 1e-12, "psi({t}) = {psi}");
        }

        let bad = BranchingRate::constant(-1.0).unwrap();
        assert!(matches!(
            time_change(&path, 0.01, &bad, 0.5),
            Err(Error::ModelViolation(_))
        ));
    }

    #[test]
    fn scaled_rate_squeezes_space() {
        let sigma = BranchingRate::gauss_bump(1.0, 1.0).unwrap();
        let scaled = sigma.scale_space(4.0);
        for x in [-1.0, -0.3, 0.0, 0.2, 2.0] {
            assert_eq!(scaled.eval(x), sigma.eval(4.0 * x));
        }
        assert_eq!(scaled.infimum(), 1.0);
        assert_eq!(scaled.limit_at_infinity(), 1.0);
    }
}
