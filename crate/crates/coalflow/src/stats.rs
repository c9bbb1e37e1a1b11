//! Statistical instruments shared by the check suites: two-sample and
//! one-sample Kolmogorov-Smirnov tests, chi-square goodness-of-fit for
//! Poisson counts, martingale z-tests, realized quadratic (co)variation,
//! and SE-aware comparison reports.
//!
//! Every instrument is a deterministic function of its input samples.
//! Pass thresholds are always passed in by the caller, never baked into
//! the instrument.

use serde::Serialize;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev_term = f64::INFINITY;
    for k in 1..200 {
        let term = (a * (k * k) as f64).exp();
        sum += sign * term;
        if term < 1e-12 * sum.abs() || term >= prev_term {
            break;
        }
        prev_term = term;
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series representation
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        sum * (-x + a * x.ln() - libm::lgamma(a)).exp()
    } else {
        // continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        let q = (-x + a * x.ln() - libm::lgamma(a)).exp() * h;
        1.0 - q
    }
}

/// Chi-square survival function with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - regularized_gamma_p(dof as f64 / 2.0, x / 2.0)
}

// ---------------------------------------------------------------------
// Point estimates
// ---------------------------------------------------------------------

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// z-score of the difference against another independent estimate.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        if se == 0.0 {
            if self.value == other.value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - other.value) / se
        }
    }

    /// z-score against a known constant.
    pub fn z_to(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target) / self.se
        }
    }
}

/// Sample mean and standard error.
pub fn mean_se(samples: &[f64]) -> Estimate {
    let n = samples.len();
    assert!(n > 0, "mean_se of empty sample");
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate {
            value: mean,
            se: 0.0,
            n,
        };
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    Estimate {
        value: mean,
        se: (var / n as f64).sqrt(),
        n,
    }
}

/// Streaming mean/variance (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean(),
            se: self.se(),
            n: self.n,
        }
    }
}

/// Streaming per-time-point statistics for replicated curves.
#[derive(Debug, Clone)]
pub struct CurveAccumulator {
    stats: Vec<RunningStats>,
}

impl CurveAccumulator {
    pub fn new(len: usize) -> Self {
        CurveAccumulator {
            stats: vec![RunningStats::new(); len],
        }
    }

    pub fn push(&mut self, curve: &[f64]) {
        assert_eq!(curve.len(), self.stats.len(), "curve length mismatch");
        for (s, &x) in self.stats.iter_mut().zip(curve) {
            s.push(x);
        }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn count(&self) -> usize {
        self.stats.first().map_or(0, |s| s.count())
    }

    pub fn mean(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.mean()).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.se()).collect()
    }

    pub fn at(&self, idx: usize) -> Estimate {
        self.stats[idx].estimate()
    }
}

// ---------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: f64,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

fn ks_p_value(statistic: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * statistic)
}

/// Two-sample Kolmogorov-Smirnov test: sup-distance of the empirical CDFs
/// and its asymptotic p-value. Samples of at least ~50 points each are
/// needed for the asymptotics to be meaningful.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::parameter("ks_two_sample: empty sample"));
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        let t = x.min(y);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_effective: n_eff,
    })
}

/// One-sample Kolmogorov-Smirnov test against a continuous reference CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    ks_one_sample_mixed(sample, &cdf, &cdf)
}

/// One-sample Kolmogorov-Smirnov test against a reference law that may
/// carry atoms: `cdf_left` is the left limit `F(x-)`. Tied sample values
/// are treated as one empirical jump, so an atom shared by both
/// distributions contributes no spurious distance.
pub fn ks_one_sample_mixed(
    sample: &[f64],
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::parameter("ks_one_sample: empty sample"));
    }
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0usize;
    while i < xs.len() {
        let v = xs[i];
        let mut j = i + 1;
        while j < xs.len() && xs[j] == v {
            j += 1;
        }
        let below = i as f64 / n; // empirical CDF just left of v
        let at = j as f64 / n; // empirical CDF at v
        d = d.max((cdf_left(v) - below).abs()).max((cdf(v) - at).abs());
        i = j;
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n_effective: n,
    })
}

// ---------------------------------------------------------------------
// Realized variation
// ---------------------------------------------------------------------

/// Cumulative sum of squared increments along one path. The first entry
/// is 0; entry `k` covers the increments up to grid index `k`.
pub fn realized_qv(series: &[f64]) -> Vec<f64> {
    realized_covariation(series, series)
}

/// Cumulative sum of increment products of two series on a common grid.
pub fn realized_covariation(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "realized_covariation: length mismatch");
    let mut out = Vec::with_capacity(a.len());
    let mut acc = 0.0;
    if !a.is_empty() {
        out.push(0.0);
        for k in 1..a.len() {
            acc += (a[k] - a[k - 1]) * (b[k] - b[k - 1]);
            out.push(acc);
        }
    }
    out
}

// ---------------------------------------------------------------------
// Martingale z-test
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ZTestResult {
    /// z-score of mean_t - mean_0 at each grid index.
    pub z: Vec<f64>,
    pub max_abs_z: f64,
    /// Index attaining the maximum.
    pub argmax: usize,
}

impl ZTestResult {
    pub fn hard_fail(&self, z_max: f64) -> bool {
        self.max_abs_z > z_max
    }
}

/// Per-time z-scores of a replicated series against its time-0 mean.
/// Zero cross-replicate spread with zero drift scores z = 0.
pub fn martingale_ztest(replicates: &[Vec<f64>]) -> Result<ZTestResult> {
    if replicates.len() < 2 {
        return Err(Error::parameter(
            "martingale_ztest: need at least 2 replicates",
        ));
    }
    let len = replicates[0].len();
    if len == 0 || replicates.iter().any(|r| r.len() != len) {
        return Err(Error::parameter("martingale_ztest: ragged replicate set"));
    }
    let mut acc = CurveAccumulator::new(len);
    for r in replicates {
        acc.push(r);
    }
    let mean0 = acc.at(0).value;
    let mut z = Vec::with_capacity(len);
    let mut max_abs = 0.0f64;
    let mut argmax = 0usize;
    for k in 0..len {
        let e = acc.at(k);
        let diff = e.value - mean0;
        let zk = if e.se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            }
        } else {
            diff / e.se
        };
        if zk.abs() > max_abs {
            max_abs = zk.abs();
            argmax = k;
        }
        z.push(zk);
    }
    Ok(ZTestResult {
        z,
        max_abs_z: max_abs,
        argmax,
    })
}

// ---------------------------------------------------------------------
// Poisson goodness of fit
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn poisson_pmf(k: usize, rate: f64) -> f64 {
    (-rate + k as f64 * rate.ln() - libm::lgamma(k as f64 + 1.0)).exp()
}

/// Binned chi-square test of integer counts against `Poisson(rate)`;
/// bins are merged from the right so that every expected count is >= 5.
pub fn poisson_gof(counts: &[u64], rate: f64) -> Result<GofResult> {
    if counts.is_empty() {
        return Err(Error::parameter("poisson_gof: empty counts"));
    }
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::parameter(format!(
            "poisson_gof: rate must be >= 0, got {rate}"
        )));
    }
    if rate == 0.0 {
        // degenerate model: all mass at zero
        let ok = counts.iter().all(|&c| c == 0);
        return Ok(GofResult {
            statistic: if ok { 0.0 } else { f64::INFINITY },
            dof: 0,
            p_value: if ok { 1.0 } else { 0.0 },
        });
    }

    let n = counts.len() as f64;
    let max_k = *counts.iter().max().unwrap() as usize;
    let mut observed = vec![0.0f64; max_k + 1];
    for &c in counts {
        observed[c as usize] += 1.0;
    }

    // Greedy binning from k = 0: extend each bin until expected mass >= 5,
    // the final bin absorbs the whole upper tail.
    let mut bins: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut obs_acc = 0.0;
    let mut exp_acc = 0.0;
    let mut cum_pmf = 0.0;
    for (k, &obs) in observed.iter().enumerate() {
        let pk = poisson_pmf(k, rate);
        cum_pmf += pk;
        obs_acc += obs;
        exp_acc += n * pk;
        if exp_acc >= 5.0 {
            bins.push((obs_acc, exp_acc));
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    // upper tail beyond max_k
    let tail = n * (1.0 - cum_pmf).max(0.0);
    obs_acc += 0.0;
    exp_acc += tail;
    if let Some(last) = bins.last_mut() {
        if exp_acc < 5.0 {
            last.0 += obs_acc;
            last.1 += exp_acc;
        } else {
            bins.push((obs_acc, exp_acc));
        }
    } else {
        bins.push((obs_acc, exp_acc));
    }

    if bins.len() < 2 {
        // Everything in one bin: no resolution, trivially consistent.
        return Ok(GofResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }

    let statistic: f64 = bins
        .iter()
        .map(|&(o, e)| {
            debug_assert!(e > 0.0);
            (o - e) * (o - e) / e
        })
        .sum();
    let dof = bins.len() - 1;
    Ok(GofResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

// ---------------------------------------------------------------------
// Comparison reports
// ---------------------------------------------------------------------

/// One line of a check-suite report: a named statistic, the threshold it
/// was held to, and the verdict. The pass flag is a pure function of
/// (value, threshold, comparison direction).
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub sample_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub pass: bool,
}

impl ComparisonReport {
    /// Pass iff `|value| <= threshold`.
    pub fn abs_within(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        ComparisonReport {
            name: name.into(),
            value,
            threshold,
            sample_sizes: Vec::new(),
            z_score: None,
            p_value: None,
            pass: value.abs() <= threshold,
        }
    }

    /// Pass iff `value <= threshold`.
    pub fn upper(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        ComparisonReport {
            name: name.into(),
            value,
            threshold,
            sample_sizes: Vec::new(),
            z_score: None,
            p_value: None,
            pass: value <= threshold,
        }
    }

    /// Pass iff `value >= threshold` (e.g. p-values).
    pub fn lower(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        ComparisonReport {
            name: name.into(),
            value,
            threshold,
            sample_sizes: Vec::new(),
            z_score: None,
            p_value: None,
            pass: value >= threshold,
        }
    }

    pub fn with_sizes(mut self, sizes: &[usize]) -> Self {
        self.sample_sizes = sizes.to_vec();
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z_score = Some(z);
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p_value = Some(p);
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn special_function_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(-1.959964) - 0.025).abs() < 1e-6);
        // classic KS critical point: Q(1.36) ~ 0.049
        assert!((kolmogorov_sf(1.36) - 0.049).abs() < 2e-3);
        // chi-square 5% critical values
        assert!((chi_square_sf(3.841, 1) - 0.05).abs() < 1e-3);
        assert!((chi_square_sf(18.307, 10) - 0.05).abs() < 1e-3);
        // P(a, x) sanity: P(0.5, large) -> 1
        assert!(regularized_gamma_p(0.5, 50.0) > 1.0 - 1e-12);
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(ks_two_sample(&[], &xs).is_err());
    }

    #[test]
    fn ks_same_distribution_stays_below_quantile() {
        let n = 10_000;
        let mut s = RngStream::new(31, 0);
        let a: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!(r.statistic < 0.027, "D = {}", r.statistic);
        assert!(r.p_value > 0.001, "p = {}", r.p_value);
    }

    #[test]
    fn ks_detects_shift() {
        let n = 10_000;
        let mut s = RngStream::new(32, 0);
        let a: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| s.standard_normal() + 0.5).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
    }

    #[test]
    fn ks_one_sample_agrees_with_reference() {
        let n = 10_000;
        let mut s = RngStream::new(33, 0);
        let a: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let r = ks_one_sample(&a, normal_cdf).unwrap();
        assert!(r.statistic < 0.02, "D = {}", r.statistic);
        let shifted = ks_one_sample(&a, |x| normal_cdf(x - 0.5)).unwrap();
        assert!(shifted.p_value < 1e-6);
    }

    #[test]
    fn realized_qv_of_constant_is_zero() {
        let qv = realized_qv(&[2.0; 50]);
        assert!(qv.iter().all(|&x| x == 0.0));
        assert_eq!(qv.len(), 50);
    }

    #[test]
    fn realized_qv_concentrates_for_brownian_path() {
        // speed 2 Brownian motion, T = 1, dt = 1e-4: one path self-averages
        let dt: f64 = 1e-4;
        let n = 10_000;
        let mut s = RngStream::new(34, 0);
        let mut x = 0.0;
        let mut path = Vec::with_capacity(n + 1);
        path.push(x);
        for _ in 0..n {
            x += s.centered_gaussian((2.0 * dt).sqrt());
            path.push(x);
        }
        let qv = realized_qv(&path);
        let total = qv[n];
        assert!((total - 2.0).abs() < 0.03 * 2.0, "qv = {total}");
    }

    #[test]
    fn ztest_constant_replicates() {
        let reps = vec![vec![1.5; 20]; 200];
        let r = martingale_ztest(&reps).unwrap();
        assert!(r.z.iter().all(|&z| z == 0.0));
        assert!(!r.hard_fail(4.0));
    }

    #[test]
    fn ztest_brownian_vs_drifted() {
        let n_rep = 10_000;
        let n_t = 20;
        let dt: f64 = 0.05;
        let mut clean = Vec::with_capacity(n_rep);
        let mut drifted = Vec::with_capacity(n_rep);
        for k in 0..n_rep {
            let mut s = RngStream::new(35, k as u64);
            let mut x = 0.0;
            let mut a = Vec::with_capacity(n_t + 1);
            let mut b = Vec::with_capacity(n_t + 1);
            a.push(0.0);
            b.push(0.0);
            for j in 0..n_t {
                x += s.centered_gaussian(dt.sqrt());
                a.push(x);
                b.push(x + 0.5 * dt * (j + 1) as f64);
            }
            clean.push(a);
            drifted.push(b);
        }
        let rc = martingale_ztest(&clean).unwrap();
        assert!(!rc.hard_fail(4.0), "max |z| = {}", rc.max_abs_z);
        let rd = martingale_ztest(&drifted).unwrap();
        assert!(
            *rd.z.last().unwrap() > 4.0,
            "z_T = {}",
            rd.z.last().unwrap()
        );
    }

    #[test]
    fn poisson_gof_accepts_true_rate() {
        let mut s = RngStream::new(36, 0);
        let counts: Vec<u64> = (0..10_000).map(|_| s.draw_poisson(7.0).unwrap()).collect();
        let r = poisson_gof(&counts, 7.0).unwrap();
        assert!(r.p_value > 0.001, "p = {}", r.p_value);
    }

    #[test]
    fn poisson_gof_rejects_misspecified_rate() {
        let mut s = RngStream::new(37, 0);
        let counts: Vec<u64> = (0..10_000).map(|_| s.draw_poisson(7.0).unwrap()).collect();
        let r = poisson_gof(&counts, 8.4).unwrap();
        assert!(r.p_value < 1e-4, "p = {}", r.p_value);
    }

    #[test]
    fn poisson_gof_degenerate_rate_zero() {
        let r = poisson_gof(&[0, 0, 0, 0], 0.0).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = poisson_gof(&[0, 1, 0], 0.0).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(poisson_gof(&[1, 2], -1.0).is_err());
    }

    #[test]
    fn report_pass_logic() {
        assert!(ComparisonReport::abs_within("a", -0.5, 0.5).pass);
        assert!(!ComparisonReport::abs_within("a", 0.6, 0.5).pass);
        assert!(ComparisonReport::upper("b", 0.01, 0.05).pass);
        assert!(ComparisonReport::lower("c", 0.2, 0.001).pass);
        let line = ComparisonReport::upper("b", 0.01, 0.05)
            .with_sizes(&[100])
            .with_p(0.3)
            .to_json_line();
        assert!(line.contains("\"pass\":true"));
    }
}
