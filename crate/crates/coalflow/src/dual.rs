//! The moment dual of the coalescing-motion superprocess: a Kingman
//! coalescent particle count paired with a function-valued process that
//! alternates coalescing-system semigroup segments with merge operators,
//! plus the Feynman-Kac weight `exp((1/2) int M_s (M_s - 1) ds)`.
//!
//! `dual_moment_estimate` evaluates the dual side of the moment identity
//! by backward composition and is an independent oracle for the forward
//! simulators: both sides estimate `E <f, X_t^m>`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::branching::BranchingRate;
use crate::error::{Error, Result};
use crate::flows::scbm::CoalescingWalker;
use crate::measure::{AtomicMeasure, SourceMeasure};
use crate::rng::RngStream;
use crate::scsm::{scsm_sample_atomic_at, scsm_sample_general_at};
use crate::stats::{mean_se, Estimate};

/// Tuples are enumerated exactly while `atoms^arity` stays at or below
/// this; beyond it they are importance-sampled by mass weights.
pub const TUPLE_ENUMERATION_LIMIT: usize = 10_000;
/// Tuples drawn per replicate in the importance-sampling regime.
const IMPORTANCE_TUPLES: usize = 100;

/// One realization of the dual count process.
#[derive(Debug, Clone, Serialize)]
pub struct DualRun {
    pub m0: usize,
    /// Jump times within `[0, horizon]`, increasing.
    pub jump_times: Vec<f64>,
    /// Ordered slot pair `(i, j)`, `i != j`, drawn uniformly among the
    /// `l(l-1)` ordered pairs at each jump; `merges[q]` acts on arity
    /// `m0 - q`.
    pub merges: Vec<(usize, usize)>,
    /// Particle count per segment: `counts[0] = m0`, then one less after
    /// each jump.
    pub counts: Vec<usize>,
    /// `exp((1/2) sum over segments of l (l - 1) * length)`, closed form.
    pub fk_weight: f64,
}

/// Sample the pure-death count process jumping `l -> l - 1` at rate
/// `l (l - 1) / 2`, together with its merge choices and Feynman-Kac
/// weight, stopped at count 1 or the horizon.
pub fn sample_coalescent(m0: usize, horizon: f64, stream: &mut RngStream) -> Result<DualRun> {
    if m0 < 1 {
        return Err(Error::parameter("coalescent needs m0 >= 1"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::parameter("coalescent horizon must be positive"));
    }
    let mut jump_times = Vec::new();
    let mut merges = Vec::new();
    let mut counts = vec![m0];
    let mut fk_exponent = 0.0;
    let mut level = m0;
    let mut time = 0.0;
    while level >= 2 {
        let rate = (level * (level - 1)) as f64 / 2.0;
        let wait = stream.draw_exponential(1.0 / rate)?;
        if time + wait > horizon {
            fk_exponent += (level * (level - 1)) as f64 * (horizon - time);
            break;
        }
        fk_exponent += (level * (level - 1)) as f64 * wait;
        time += wait;
        jump_times.push(time);
        // uniform ordered pair (i, j), i != j, over 0..level
        let i = stream.index(level);
        let mut j = stream.index(level - 1);
        if j >= i {
            j += 1;
        }
        merges.push((i, j));
        level -= 1;
        counts.push(level);
    }
    Ok(DualRun {
        m0,
        jump_times,
        merges,
        counts,
        fk_weight: (0.5 * fk_exponent).exp(),
    })
}

pub type MomentClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// An `m`-variable moment test function.
#[derive(Clone)]
pub enum MomentFn {
    /// Constant 1 (any arity).
    One,
    /// `prod_i exp(-x_i^2)` (any arity).
    GaussProduct,
    /// User closure with a fixed arity.
    Custom { arity: usize, f: MomentClosure },
}

impl std::fmt::Debug for MomentFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MomentFn::One => write!(f, "MomentFn::One"),
            MomentFn::GaussProduct => write!(f, "MomentFn::GaussProduct"),
            MomentFn::Custom { arity, .. } => write!(f, "MomentFn::Custom({arity})"),
        }
    }
}

impl MomentFn {
    pub fn id(&self) -> String {
        match self {
            MomentFn::One => "one".into(),
            MomentFn::GaussProduct => "gauss_product".into(),
            MomentFn::Custom { arity, .. } => format!("custom{arity}"),
        }
    }

    fn check_arity(&self, m: usize) -> Result<()> {
        match self {
            MomentFn::Custom { arity, .. } if *arity != m => Err(Error::parameter(format!(
                "moment function has arity {arity}, expected {m}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, xs: &[f64]) -> f64 {
        match self {
            MomentFn::One => 1.0,
            MomentFn::GaussProduct => xs.iter().map(|&x| (-x * x).exp()).product(),
            MomentFn::Custom { f, .. } => f(xs),
        }
    }
}

/// Expand an arity-`a` coordinate vector to arity `a + 1` by planting the
/// last coordinate in slots `i` and `j` and filling the remaining slots
/// with the other coordinates in their original order. Returns the
/// planted coordinate (where the branching multiplier is evaluated).
fn expand_merge(positions: &mut Vec<f64>, i: usize, j: usize) -> f64 {
    let a = positions.len();
    let planted = positions[a - 1];
    let mut expanded = vec![0.0; a + 1];
    expanded[i] = planted;
    expanded[j] = planted;
    let mut src = 0usize;
    for (slot, val) in expanded.iter_mut().enumerate() {
        if slot == i || slot == j {
            continue;
        }
        *val = positions[src];
        src += 1;
    }
    debug_assert_eq!(src, a - 1);
    *positions = expanded;
    planted
}

/// One unbiased sample of `Y_t` evaluated at a starting tuple, by backward
/// composition through the dual run's segments and merge operators.
#[allow(clippy::too_many_arguments)]
fn evaluate_dual_functional(
    start: &[f64],
    run: &DualRun,
    sigma: &BranchingRate,
    speed: f64,
    f: &MomentFn,
    t: f64,
    step: f64,
    stream: &mut RngStream,
) -> f64 {
    let k = run.jump_times.len();
    debug_assert_eq!(start.len(), *run.counts.last().unwrap());
    let mut positions = start.to_vec();
    let mut weight = 1.0;

    // outermost segment: duration t - tau_k
    let first_seg = if k == 0 { t } else { t - run.jump_times[k - 1] };
    if first_seg > 0.0 {
        let mut walker = CoalescingWalker::new(&positions, speed);
        walker.advance(first_seg, step, stream);
        for (slot, p) in positions.iter_mut().enumerate() {
            *p = walker.label_position(slot);
        }
    }

    for q in (0..k).rev() {
        let (i, j) = run.merges[q];
        let planted = expand_merge(&mut positions, i, j);
        weight *= sigma.eval(planted);
        debug_assert_eq!(positions.len(), run.counts[q]);
        let seg = run.jump_times[q] - if q > 0 { run.jump_times[q - 1] } else { 0.0 };
        if seg > 0.0 {
            let mut walker = CoalescingWalker::new(&positions, speed);
            walker.advance(seg, step, stream);
            for (slot, p) in positions.iter_mut().enumerate() {
                *p = walker.label_position(slot);
            }
        }
    }

    debug_assert_eq!(positions.len(), run.m0);
    weight * f.eval(&positions)
}

fn tuple_key(atoms: &[(f64, f64)], indices: &[usize]) -> u64 {
    // FNV-1a over the (position, mass) bit patterns in slot order: the key
    // depends on tuple content, not on the atom list's ordering.
    let mut h = 0xcbf29ce484222325u64;
    let mut eat = |v: u64| {
        for shift in [0u32, 8, 16, 24, 32, 40, 48, 56] {
            h ^= (v >> shift) & 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for &idx in indices {
        eat(atoms[idx].0.to_bits());
        eat(atoms[idx].1.to_bits());
    }
    h
}

/// Unbiased Monte Carlo estimate of `E <f, X_t^m>` from the dual process:
/// sample a coalescent run, integrate a single-sample evaluation of `Y_t`
/// against `mu^{M_t}` (exact tuple enumeration up to
/// `TUPLE_ENUMERATION_LIMIT` tuples, mass-weighted importance sampling
/// above), and apply the Feynman-Kac weight. Replicates run in parallel on
/// per-replicate streams.
#[allow(clippy::too_many_arguments)]
pub fn dual_moment_estimate(
    mu: &AtomicMeasure,
    sigma: &BranchingRate,
    speed: f64,
    f: &MomentFn,
    m: usize,
    t: f64,
    replicates: usize,
    step: f64,
    stream: &RngStream,
) -> Result<Estimate> {
    if m < 1 {
        return Err(Error::parameter("moment order m must be >= 1"));
    }
    f.check_arity(m)?;
    if mu.is_empty() {
        return Err(Error::parameter("dual estimate needs a non-empty measure"));
    }
    if !(t > 0.0) || !(step > 0.0) || replicates < 2 {
        return Err(Error::parameter(
            "need t > 0, step > 0 and at least 2 replicates",
        ));
    }
    if !(speed > 0.0) {
        return Err(Error::parameter("carrier speed must be positive"));
    }

    let atoms = mu.atoms().to_vec();
    let total_mass = mu.total_mass();

    let mut values = vec![0.0f64; replicates];
    values
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(rep, slot)| -> Result<()> {
            let mut rs = stream.substream(rep as u64);
            let run = sample_coalescent(m, t, &mut rs)?;
            let arity = *run.counts.last().unwrap();

            let n_tuples = atoms.len().checked_pow(arity as u32);
            let exact = n_tuples.is_some_and(|n| n <= TUPLE_ENUMERATION_LIMIT);

            let value = if exact {
                // enumerate mu^{arity}; per-tuple randomness is keyed by
                // tuple content and contributions are summed in canonical
                // key order, so the estimate is invariant under
                // permutations of the atom list
                let mut contributions: Vec<(u64, f64)> = Vec::with_capacity(n_tuples.unwrap());
                let mut indices = vec![0usize; arity];
                let mut xs = vec![0.0f64; arity];
                'tuples: loop {
                    let mut mass_product = 1.0;
                    for (slot_idx, &a) in indices.iter().enumerate() {
                        xs[slot_idx] = atoms[a].0;
                        mass_product *= atoms[a].1;
                    }
                    if mass_product > 0.0 {
                        let key = tuple_key(&atoms, &indices);
                        let mut ts = rs.substream(key);
                        let y =
                            evaluate_dual_functional(&xs, &run, sigma, speed, f, t, step, &mut ts);
                        contributions.push((key, mass_product * y));
                    }
                    // next multi-index
                    let mut p = 0;
                    loop {
                        indices[p] += 1;
                        if indices[p] < atoms.len() {
                            break;
                        }
                        indices[p] = 0;
                        p += 1;
                        if p == arity {
                            break 'tuples;
                        }
                    }
                }
                contributions.sort_unstable_by_key(|&(key, v)| (key, v.to_bits()));
                contributions.iter().map(|&(_, v)| v).sum::<f64>()
            } else {
                // importance sampling: slots i.i.d. proportional to mass,
                // corrected by total_mass^arity
                let mut acc = 0.0;
                let mut xs = vec![0.0f64; arity];
                for _ in 0..IMPORTANCE_TUPLES {
                    for x in xs.iter_mut() {
                        *x = mu.sample_location(&mut rs);
                    }
                    acc += evaluate_dual_functional(&xs, &run, sigma, speed, f, t, step, &mut rs);
                }
                total_mass.powi(arity as i32) * acc / IMPORTANCE_TUPLES as f64
            };

            *slot = value * run.fk_weight;
            Ok(())
        })?;

    Ok(mean_se(&values))
}

/// `<f, nu^m>` for an atomic measure: the sum over ordered `m`-tuples of
/// atoms of the mass product times `f` at the tuple positions.
pub fn product_moment(measure: &AtomicMeasure, f: &MomentFn, m: usize) -> f64 {
    let atoms = measure.atoms();
    if atoms.is_empty() {
        return 0.0;
    }
    let mut indices = vec![0usize; m];
    let mut xs = vec![0.0f64; m];
    let mut sum = 0.0;
    loop {
        let mut w = 1.0;
        for (slot, &a) in indices.iter().enumerate() {
            xs[slot] = atoms[a].0;
            w *= atoms[a].1;
        }
        if w != 0.0 {
            sum += w * f.eval(&xs);
        }
        let mut p = 0;
        loop {
            indices[p] += 1;
            if indices[p] < atoms.len() {
                break;
            }
            indices[p] = 0;
            p += 1;
            if p == m {
                return sum;
            }
        }
    }
}

/// Forward-simulation estimate of `E <f, X_t^m>`: the left side of the
/// duality identity. With `cutoff = None` the source must be atomic and
/// the process starts exactly from it; with `Some(r)` the general
/// excursion construction is used (valid for `t >= r`).
#[allow(clippy::too_many_arguments)]
pub fn forward_moment_estimate(
    source: &SourceMeasure,
    sigma: &BranchingRate,
    speed: f64,
    f: &MomentFn,
    m: usize,
    t: f64,
    replicates: usize,
    cutoff: Option<f64>,
    step: f64,
    stream: &RngStream,
) -> Result<Estimate> {
    if m < 1 {
        return Err(Error::parameter("moment order m must be >= 1"));
    }
    f.check_arity(m)?;
    if replicates < 2 {
        return Err(Error::parameter("need at least 2 replicates"));
    }
    let atoms: Option<Vec<(f64, f64)>> = match (cutoff, source) {
        (None, SourceMeasure::Atomic { measure }) => Some(measure.atoms().to_vec()),
        (None, _) => {
            return Err(Error::parameter(
                "cutoff-free forward estimation needs an atomic source",
            ))
        }
        (Some(r), _) => {
            if !(r > 0.0) || !(r < t) {
                return Err(Error::parameter("need 0 < cutoff < t"));
            }
            None
        }
    };

    let mut values = vec![0.0f64; replicates];
    values
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(rep, slot)| -> Result<()> {
            let rs = stream.substream(rep as u64);
            let nu = match &atoms {
                Some(atoms) => scsm_sample_atomic_at(atoms, sigma, speed, t, step, &rs)?,
                None => {
                    scsm_sample_general_at(source, sigma, speed, cutoff.unwrap(), t, step, &rs)?
                }
            };
            *slot = product_moment(&nu, f, m);
            Ok(())
        })?;

    Ok(mean_se(&values))
}

/// JSON-ready duality comparison: both estimates and the z-score of their
/// difference.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub moment_order: usize,
    pub function: String,
    pub t: f64,
    pub forward: Estimate,
    pub dual: Estimate,
    pub z_score: f64,
}

impl DualityReport {
    pub fn new(
        moment_order: usize,
        function: &MomentFn,
        t: f64,
        forward: Estimate,
        dual: Estimate,
    ) -> Self {
        DualityReport {
            moment_order,
            function: function.id(),
            t,
            forward,
            dual,
            z_score: forward.z_against(&dual),
        }
    }
}
