//! The verification battery: one function per acceptance criterion, each
//! returning SE-aware comparison reports with its thresholds pinned in
//! code. The `full` settings run the stated replicate counts; `fast`
//! scales them down (with noise allowances widened accordingly) for a
//! quick smoke pass.
//!
//! Replicates always run in parallel on per-replicate streams and are
//! collected into preallocated slots, so results are independent of the
//! worker count.

use rayon::prelude::*;
use std::time::Instant;

use crate::branching::{feller_path_euler, feller_sample_exact, BranchingRate};
use crate::dual::{dual_moment_estimate, forward_moment_estimate, MomentFn};
use crate::error::Result;
use crate::flows::sibm::SibmWalker;
use crate::flows::{scale_rho, simulate_scbm, InteractionKernel};
use crate::io;
use crate::measure::{AtomicMeasure, SourceMeasure};
use crate::rng::RngStream;
use crate::scsm::{
    martingale_functional, qv_predicted, simulate_scsm_atomic, simulate_scsm_general,
};
use crate::sdsm::{
    absorbed_difference_cdf, absorbed_difference_cdf_left, convergence_experiment,
    ConvergenceConfig, ABSORPTION_RESOLUTION,
};
use crate::stats::{self, ks_two_sample, mean_se, normal_cdf, ComparisonReport};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    /// Reduced replicate counts for a quick pass.
    Fast,
    /// The stated replicate counts and tolerances.
    Full,
}

#[derive(Debug, Clone)]
pub struct SuiteSettings {
    pub kind: SuiteKind,
    pub seed: u64,
    pub n_paths: usize,
    pub n_feller: usize,
    pub n_ensembles: usize,
    pub n_martingale: usize,
    pub n_dual: usize,
    pub n_forward: usize,
    pub n_scaling: usize,
    pub thetas: Vec<f64>,
}

impl SuiteSettings {
    pub fn new(kind: SuiteKind) -> Self {
        match kind {
            SuiteKind::Full => SuiteSettings {
                kind,
                seed: 0xC0A1F10,
                n_paths: 10_000,
                n_feller: 10_000,
                n_ensembles: 10_000,
                n_martingale: 10_000,
                n_dual: 100_000,
                n_forward: 10_000,
                n_scaling: 10_000,
                thetas: vec![1.0, 4.0, 16.0, 64.0],
            },
            SuiteKind::Fast => SuiteSettings {
                kind,
                seed: 0xFA57_5EED,
                n_paths: 1_000,
                n_feller: 2_000,
                n_ensembles: 1_000,
                n_martingale: 1_000,
                n_dual: 10_000,
                n_forward: 2_000,
                n_scaling: 1_000,
                thetas: vec![1.0, 4.0, 16.0, 64.0],
            },
        }
    }

    fn criterion_seed(&self, id: usize) -> u64 {
        self.seed.wrapping_add(id as u64)
    }

    /// 99%-level two-sample KS noise at this suite's scaling sample size.
    fn ks2_noise(&self) -> f64 {
        1.628 * (2.0 / self.n_scaling as f64).sqrt()
    }

    /// 99%-level one-sample KS noise.
    fn ks1_noise(&self) -> f64 {
        1.628 / (self.n_scaling as f64).sqrt()
    }

    /// Absolute KS ceiling: the full-suite criteria state 0.05 at
    /// N = 10^4; at reduced N the intrinsic allowance is kept and the
    /// noise part widens.
    fn ks_ceiling_two_sample(&self) -> f64 {
        match self.kind {
            SuiteKind::Full => 0.05,
            SuiteKind::Fast => 0.05 - 1.628 * (2.0f64 / 10_000.0).sqrt() + self.ks2_noise(),
        }
    }

    fn ks_ceiling_one_sample(&self) -> f64 {
        match self.kind {
            SuiteKind::Full => 0.05,
            SuiteKind::Fast => 0.05 - 1.628 / 10_000.0f64.sqrt() + self.ks1_noise(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub reports: Vec<ComparisonReport>,
    pub passed: bool,
    pub wall_seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.wall_seconds
        )
    }
}

fn finish(
    id: usize,
    name: &'static str,
    started: Instant,
    runtime_budget: Option<f64>,
    mut reports: Vec<ComparisonReport>,
) -> CriterionOutcome {
    let wall = started.elapsed().as_secs_f64();
    if let Some(budget) = runtime_budget {
        reports.push(ComparisonReport::upper(
            format!("c{id}.runtime_seconds"),
            wall,
            budget,
        ));
    }
    let passed = reports.iter().all(|r| r.pass);
    CriterionOutcome {
        id,
        name,
        reports,
        passed,
        wall_seconds: wall,
    }
}

fn parallel_collect<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    out.par_iter_mut()
        .enumerate()
        .try_for_each(|(rep, slot)| -> Result<()> {
            *slot = Some(f(rep)?);
            Ok(())
        })?;
    Ok(out.into_iter().map(|x| x.expect("slot filled")).collect())
}

// ---------------------------------------------------------------------
// Criterion 1: pairwise covariation of the coalescing system
// ---------------------------------------------------------------------

fn criterion_1(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let (rho, t_end, dt): (f64, f64, f64) = (1.0, 1.0, 1e-3);
    let starts = [0.0, 0.5];
    let n = s.n_paths;
    let seed = s.criterion_seed(1);
    let n_check = 10usize;
    let n_times = (t_end / dt).round() as usize + 1;
    let check_idx: Vec<usize> = (1..=n_check).map(|j| j * (n_times - 1) / n_check).collect();

    // per replicate: realized covariation minus the pathwise prediction
    // rho (t - t ^ tau), at the checkpoints
    let diffs = parallel_collect(n, |rep| {
        let mut stream = RngStream::new(seed, rep as u64);
        let bundle = simulate_scbm(&starts, rho, t_end, dt, &mut stream)?;
        let cov = stats::realized_covariation(bundle.path(0), bundle.path(1));
        let tau = bundle.merge_time(0, 1);
        let row: Vec<f64> = check_idx
            .iter()
            .map(|&k| {
                let t = k as f64 * dt;
                let pred = match tau {
                    Some(m) => rho * (t - t.min(m)),
                    None => 0.0,
                };
                cov[k] - pred
            })
            .collect();
        Ok(row)
    })?;

    let mut reports = Vec::new();
    for (j, &k) in check_idx.iter().enumerate() {
        let vals: Vec<f64> = diffs.iter().map(|d| d[j]).collect();
        let est = mean_se(&vals);
        reports.push(
            ComparisonReport::abs_within(
                format!("c1.covariation_gap_t{:.1}", k as f64 * dt),
                est.z_to(0.0),
                3.0,
            )
            .with_sizes(&[n]),
        );
    }
    Ok(finish(1, "covariation law", started, Some(30.0), reports))
}

// ---------------------------------------------------------------------
// Criterion 2: coalescence probability
// ---------------------------------------------------------------------

fn criterion_2(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let (rho, t_end, dt): (f64, f64, f64) = (1.0, 1.0, 1e-3);
    let gap = 0.5;
    let n = s.n_paths;
    let seed = s.criterion_seed(2);

    let merged = parallel_collect(n, |rep| {
        let mut stream = RngStream::new(seed, rep as u64);
        let bundle = simulate_scbm(&[0.0, gap], rho, t_end, dt, &mut stream)?;
        Ok(if bundle.merge_time(0, 1).is_some() {
            1.0
        } else {
            0.0
        })
    })?;

    let p_hat = merged.iter().sum::<f64>() / n as f64;
    let expected = 2.0 * (1.0 - normal_cdf(gap / (2.0 * rho * t_end).sqrt()));
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    let report =
        ComparisonReport::abs_within("c2.coalescence_probability", (p_hat - expected) / se, 3.0)
            .with_sizes(&[n]);
    Ok(finish(
        2,
        "coalescence probability",
        started,
        Some(30.0),
        vec![report],
    ))
}

// ---------------------------------------------------------------------
// Criterion 3: exact Feller sampler vs Euler, Laplace transform,
// extinction
// ---------------------------------------------------------------------

fn criterion_3(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let (x, t): (f64, f64) = (1.0, 1.0);
    let n = s.n_feller;
    let seed = s.criterion_seed(3);

    let exact = parallel_collect(n, |rep| {
        let mut stream = RngStream::new(seed, rep as u64);
        feller_sample_exact(x, t, &mut stream)
    })?;
    let euler = parallel_collect(n, |rep| {
        let mut stream = RngStream::new(seed ^ 0x5EED, rep as u64);
        Ok(*feller_path_euler(x, t, 1e-4, &mut stream)?.last().unwrap())
    })?;

    let mut reports = Vec::new();
    let ks = ks_two_sample(&exact, &euler)?;
    // the 0.02 ceiling is tied to N = 10^4; same-law KS scales as 1/sqrt(n)
    let ks_ceiling = 0.02 * (10_000.0 / n as f64).sqrt();
    reports.push(
        ComparisonReport::upper("c3.ks_exact_vs_euler", ks.statistic, ks_ceiling)
            .with_sizes(&[n, n]),
    );

    for lambda in [0.5, 1.0, 2.0] {
        let vals: Vec<f64> = exact.iter().map(|&m| (-lambda * m).exp()).collect();
        let est = mean_se(&vals);
        let target = (-x * lambda / (1.0 + lambda * t / 2.0)).exp();
        reports.push(
            ComparisonReport::abs_within(
                format!("c3.laplace_lambda_{lambda}"),
                est.z_to(target),
                3.0,
            )
            .with_sizes(&[n]),
        );
    }

    let extinct = exact.iter().filter(|&&m| m == 0.0).count() as f64 / n as f64;
    let p = (-2.0 * x / t).exp();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    reports.push(
        ComparisonReport::abs_within("c3.extinction_frequency", (extinct - p) / se, 3.0)
            .with_sizes(&[n]),
    );
    Ok(finish(3, "feller exactness", started, Some(60.0), reports))
}

// ---------------------------------------------------------------------
// Criterion 4: excursion ensemble law
// ---------------------------------------------------------------------

fn criterion_4(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let n = s.n_ensembles;
    let seed = s.criterion_seed(4);
    let r = 0.1;
    let sigma = BranchingRate::constant(1.0)?;
    let source = SourceMeasure::atomic(AtomicMeasure::delta(0.0, 1.0)?);

    let results = parallel_collect(n, |rep| {
        let stream = RngStream::new(seed, rep as u64);
        let path = simulate_scsm_general(&source, &sigma, 1.0, r, 0.2, 0.05, false, &stream)?;
        Ok(vec![
            path.live_atom_count_at(0) as f64,
            path.total_mass_at(0),
        ])
    })?;

    let counts: Vec<u64> = results.iter().map(|v| v[0] as u64).collect();
    let gof = stats::poisson_gof(&counts, 2.0 / r)?;
    let masses: Vec<f64> = results.iter().map(|v| v[1]).collect();
    let mass_est = mean_se(&masses);

    let reports = vec![
        ComparisonReport::lower("c4.atom_count_poisson_gof_p", gof.p_value, 0.001)
            .with_sizes(&[n])
            .with_p(gof.p_value),
        ComparisonReport::abs_within("c4.mean_mass_at_cutoff", mass_est.z_to(1.0), 3.0)
            .with_sizes(&[n]),
    ];
    Ok(finish(
        4,
        "excursion ensemble",
        started,
        Some(60.0),
        reports,
    ))
}

// ---------------------------------------------------------------------
// Criterion 5: martingale property and quadratic variation
// ---------------------------------------------------------------------

fn criterion_5(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let n = s.n_martingale;
    let seed = s.criterion_seed(5);
    let atoms = [(-1.0, 1.0), (0.5, 1.0), (0.5, 1.0)]; // two atoms share a start
    let sigma = BranchingRate::gauss_bump(1.0, 1.0)?;
    let phi = TestFunction::SinX;
    let (t_end, dt): (f64, f64) = (1.0, 1e-3);
    let n_check = 10usize;
    let n_times = (t_end / dt).round() as usize + 1;
    let check_idx: Vec<usize> = (1..=n_check).map(|j| j * (n_times - 1) / n_check).collect();

    let rows = parallel_collect(n, |rep| {
        let stream = RngStream::new(seed, rep as u64);
        let path = simulate_scsm_atomic(&atoms, &sigma, 1.0, t_end, dt, false, &stream)?;
        let m = martingale_functional(&path, &phi);
        let realized = *stats::realized_qv(&m).last().unwrap();
        let predicted = *qv_predicted(&path, &phi, &sigma).last().unwrap();
        let mut row: Vec<f64> = check_idx.iter().map(|&k| m[k]).collect();
        row.push(realized - predicted);
        Ok(row)
    })?;

    let mut reports = Vec::new();
    // martingale mean at the horizon within 3 SE, whole curve under the
    // hard z = 4 guard
    let finals: Vec<f64> = rows.iter().map(|r| r[n_check - 1]).collect();
    let est = mean_se(&finals);
    reports.push(
        ComparisonReport::abs_within("c5.mean_martingale_at_horizon", est.z_to(0.0), 3.0)
            .with_sizes(&[n]),
    );
    let mut max_z = 0.0f64;
    for j in 0..n_check {
        let vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let e = mean_se(&vals);
        max_z = max_z.max(e.z_to(0.0).abs());
    }
    reports.push(ComparisonReport::upper("c5.max_checkpoint_z", max_z, 4.0).with_sizes(&[n]));

    let qv_diffs: Vec<f64> = rows.iter().map(|r| r[n_check]).collect();
    let qv_est = mean_se(&qv_diffs);
    reports.push(
        ComparisonReport::abs_within("c5.qv_realized_vs_predicted", qv_est.z_to(0.0), 3.0)
            .with_sizes(&[n]),
    );
    Ok(finish(
        5,
        "martingale and qv",
        started,
        Some(180.0),
        reports,
    ))
}

// ---------------------------------------------------------------------
// Criterion 6: moment duality
// ---------------------------------------------------------------------

fn criterion_6(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let seed = s.criterion_seed(6);
    let mu = AtomicMeasure::new(vec![(-1.0, 1.0), (1.0, 1.0)])?;
    let source = SourceMeasure::atomic(mu.clone());
    let sigma = BranchingRate::constant(1.0)?;
    let (rho, t, dt) = (1.0, 1.0, 1e-3);
    let (n_dual, n_fwd) = (s.n_dual, s.n_forward);
    let mut reports = Vec::new();

    // m = 2, f(x, y) = exp(-x^2 - y^2)
    let f2 = MomentFn::GaussProduct;
    let dual2 = dual_moment_estimate(
        &mu,
        &sigma,
        rho,
        &f2,
        2,
        t,
        n_dual,
        dt,
        &RngStream::new(seed, 0),
    )?;
    let fwd2 = forward_moment_estimate(
        &source,
        &sigma,
        rho,
        &f2,
        2,
        t,
        n_fwd,
        None,
        dt,
        &RngStream::new(seed ^ 0xF0, 0),
    )?;
    reports.push(
        ComparisonReport::abs_within("c6.duality_m2_gauss", fwd2.z_against(&dual2), 3.0)
            .with_sizes(&[n_fwd, n_dual]),
    );

    // m = 3, f = 1
    let f3 = MomentFn::One;
    let dual3 = dual_moment_estimate(
        &mu,
        &sigma,
        rho,
        &f3,
        3,
        t,
        n_dual,
        dt,
        &RngStream::new(seed ^ 0xF1, 0),
    )?;
    let fwd3 = forward_moment_estimate(
        &source,
        &sigma,
        rho,
        &f3,
        3,
        t,
        n_fwd,
        None,
        dt,
        &RngStream::new(seed ^ 0xF2, 0),
    )?;
    reports.push(
        ComparisonReport::abs_within("c6.duality_m3_one", fwd3.z_against(&dual3), 3.0)
            .with_sizes(&[n_fwd, n_dual]),
    );

    // closed-form anchor: m = 2, f = 1, constant sigma
    let anchor = dual_moment_estimate(
        &mu,
        &sigma,
        rho,
        &MomentFn::One,
        2,
        t,
        n_dual,
        dt,
        &RngStream::new(seed ^ 0xF3, 0),
    )?;
    let target = 4.0 + 1.0 * 2.0 * t; // <1,mu>^2 + sigma <1,mu> t
    reports.push(
        ComparisonReport::abs_within("c6.second_moment_anchor", anchor.z_to(target), 3.0)
            .with_sizes(&[n_dual]),
    );

    Ok(finish(6, "moment duality", started, Some(600.0), reports))
}

// ---------------------------------------------------------------------
// Criterion 7: flow scaling (pair distance vs absorbed difference)
// ---------------------------------------------------------------------

fn criterion_7(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let seed = s.criterion_seed(7);
    let kernel = InteractionKernel::standard_gaussian();
    let gap = 0.5;
    let (t_end, dt): (f64, f64) = (1.0, 1e-3);
    let n = s.n_scaling;
    let rho0 = {
        use crate::flows::RhoEval;
        kernel.rho0()
    };

    let mut reports = Vec::new();
    let mut ks_values = Vec::new();
    for (ti, &theta) in s.thetas.iter().enumerate() {
        let scaled = scale_rho(&kernel, theta)?;
        let distances = parallel_collect(n, |rep| {
            let mut stream = RngStream::new(seed.wrapping_add(ti as u64), rep as u64);
            let mut walker = SibmWalker::new(&[0.0, gap], &scaled, dt);
            let steps = (t_end / dt).round() as usize;
            for _ in 0..steps {
                walker.step(dt, &mut stream)?;
            }
            let d = (walker.label_position(1) - walker.label_position(0)).abs();
            Ok(if d < ABSORPTION_RESOLUTION { 0.0 } else { d })
        })?;
        let ks = stats::ks_one_sample_mixed(
            &distances,
            |y| absorbed_difference_cdf(gap, 2.0 * rho0, t_end, y),
            |y| absorbed_difference_cdf_left(gap, 2.0 * rho0, t_end, y),
        )?;
        ks_values.push((theta, ks.statistic));
    }

    let noise = s.ks1_noise();
    for w in ks_values.windows(2) {
        reports.push(
            ComparisonReport::upper(
                format!("c7.ks_monotone_theta_{}_to_{}", w[0].0, w[1].0),
                w[1].1,
                w[0].1 + noise,
            )
            .with_sizes(&[n]),
        );
    }
    let last = ks_values.last().unwrap();
    reports.push(
        ComparisonReport::upper(
            format!("c7.ks_final_theta_{}", last.0),
            last.1,
            s.ks_ceiling_one_sample(),
        )
        .with_sizes(&[n]),
    );
    Ok(finish(7, "flow scaling", started, Some(300.0), reports))
}

// ---------------------------------------------------------------------
// Criterion 8: superprocess scaling
// ---------------------------------------------------------------------

fn criterion_8(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let seed = s.criterion_seed(8);
    let kernel = InteractionKernel::standard_gaussian();
    let sigma = BranchingRate::gauss_bump(1.0, 1.0)?; // limit 1 at infinity
    let source = SourceMeasure::atomic(AtomicMeasure::new(vec![(-0.5, 1.0), (0.5, 1.0)])?);
    let cfg = ConvergenceConfig {
        thetas: s.thetas.clone(),
        phis: vec![TestFunction::GaussExp],
        t: 0.5,
        cutoff: 0.1,
        step: 5e-3,
        replicates: s.n_scaling,
        seed,
        pair_distance: true,
    };
    let rows = convergence_experiment(&source, &kernel, &sigma, &cfg)?;

    let phi_rows: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.phi_id == "gauss")
        .map(|r| (r.theta, r.ks))
        .collect();

    let mut reports = Vec::new();
    let noise = s.ks2_noise();
    for w in phi_rows.windows(2) {
        reports.push(
            ComparisonReport::upper(
                format!("c8.ks_monotone_theta_{}_to_{}", w[0].0, w[1].0),
                w[1].1,
                w[0].1 + noise,
            )
            .with_sizes(&[s.n_scaling]),
        );
    }
    let last = phi_rows.last().unwrap();
    reports.push(
        ComparisonReport::upper(
            format!("c8.ks_final_theta_{}", last.0),
            last.1,
            s.ks_ceiling_two_sample(),
        )
        .with_sizes(&[s.n_scaling]),
    );
    Ok(finish(
        8,
        "superprocess scaling",
        started,
        Some(900.0),
        reports,
    ))
}

// ---------------------------------------------------------------------
// Criterion 9: determinism across reruns and worker counts
// ---------------------------------------------------------------------

/// A small end-to-end artifact: replicated bundles serialized in slot
/// order plus their covariation curve.
fn determinism_artifact(seed: u64, threads: usize) -> Result<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| -> Result<Vec<u8>> {
        let n = 64usize;
        let bundles = parallel_collect(n, |rep| {
            let mut stream = RngStream::new(seed, rep as u64);
            simulate_scbm(&[0.0, 0.4], 1.0, 0.1, 1e-2, &mut stream)
        })?;
        let mut buf = Vec::new();
        for (rep, bundle) in bundles.iter().enumerate() {
            io::write_bundle_csv(&mut buf, bundle, seed)?;
            io::write_bundle_summary(&mut buf, bundle, seed, rep as u64)?;
        }
        let curve = crate::flows::estimate_covariation(&bundles, 0, 1)?;
        for (t, (m, se)) in curve
            .times
            .iter()
            .zip(curve.mean.iter().zip(curve.se.iter()))
        {
            use std::io::Write;
            writeln!(buf, "{t},{m},{se}")?;
        }
        Ok(buf)
    })
}

fn criterion_9(s: &SuiteSettings) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let seed = s.criterion_seed(9);
    let single = determinism_artifact(seed, 1)?;
    let pooled = determinism_artifact(seed, 4)?;
    let rerun = determinism_artifact(seed, 4)?;

    let reports = vec![
        ComparisonReport::upper(
            "c9.bytes_identical_across_worker_counts",
            if single == pooled { 0.0 } else { 1.0 },
            0.0,
        ),
        ComparisonReport::upper(
            "c9.bytes_identical_across_reruns",
            if pooled == rerun { 0.0 } else { 1.0 },
            0.0,
        ),
    ];
    Ok(finish(9, "determinism", started, None, reports))
}

// ---------------------------------------------------------------------

pub const CRITERIA: [usize; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

pub fn run_criterion(id: usize, settings: &SuiteSettings) -> Result<CriterionOutcome> {
    match id {
        1 => criterion_1(settings),
        2 => criterion_2(settings),
        3 => criterion_3(settings),
        4 => criterion_4(settings),
        5 => criterion_5(settings),
        6 => criterion_6(settings),
        7 => criterion_7(settings),
        8 => criterion_8(settings),
        9 => criterion_9(settings),
        other => Err(crate::error::Error::parameter(format!(
            "unknown criterion {other}"
        ))),
    }
}

pub fn run_suite(settings: &SuiteSettings) -> Result<Vec<CriterionOutcome>> {
    CRITERIA
        .iter()
        .map(|&id| run_criterion(id, settings))
        .collect()
}
