//! Coalescing and interacting Brownian particle systems, their driving
//! kernels, and the realized-covariation instrument used to verify the
//! covariation structure `<y_i, y_j>(t) = rho (t - t ^ tau_ij)`.

pub mod bundle;
pub mod kernel;
pub mod scbm;
pub mod sibm;

pub use bundle::{BundleSummary, LabeledPathBundle};
pub use kernel::{rho_eval, scale_rho, ConstantRho, InteractionKernel, RhoEval, ScaledRho};
pub use scbm::{extend_flow, simulate_scbm};
pub use sibm::{simulate_sibm, EIGEN_CLIP_RELATIVE};

use crate::error::{Error, Result};
use crate::stats::CurveAccumulator;

/// Replicate-averaged realized covariation of two labels, with SE bands.
#[derive(Debug, Clone)]
pub struct CovariationCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
}

/// Streaming accumulator over replicated bundles, so large replicate sets
/// never need to be held in memory at once.
#[derive(Debug)]
pub struct CovariationAccumulator {
    label_i: usize,
    label_j: usize,
    step: Option<f64>,
    acc: Option<CurveAccumulator>,
}

impl CovariationAccumulator {
    pub fn new(label_i: usize, label_j: usize) -> Self {
        CovariationAccumulator {
            label_i,
            label_j,
            step: None,
            acc: None,
        }
    }

    pub fn push(&mut self, bundle: &LabeledPathBundle) -> Result<()> {
        if self.label_i >= bundle.labels() || self.label_j >= bundle.labels() {
            return Err(Error::parameter("covariation label out of range"));
        }
        match (self.step, &self.acc) {
            (None, _) => {
                self.step = Some(bundle.step);
                self.acc = Some(CurveAccumulator::new(bundle.n_times()));
            }
            (Some(step), Some(acc)) => {
                if step != bundle.step || acc.len() != bundle.n_times() {
                    return Err(Error::parameter("covariation: bundles on mismatched grids"));
                }
            }
            _ => unreachable!(),
        }
        let a = bundle.path(self.label_i);
        let b = bundle.path(self.label_j);
        let curve = crate::stats::realized_covariation(a, b);
        self.acc.as_mut().unwrap().push(&curve);
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.acc.as_ref().map_or(0, |a| a.count())
    }

    pub fn finish(self) -> Result<CovariationCurve> {
        let acc = self
            .acc
            .ok_or_else(|| Error::parameter("covariation: no bundles pushed"))?;
        let step = self.step.unwrap();
        let times = (0..acc.len()).map(|k| k as f64 * step).collect();
        Ok(CovariationCurve {
            times,
            mean: acc.mean(),
            se: acc.se(),
            n: acc.count(),
        })
    }
}

/// Realized covariation of labels `i`, `j` averaged across replicated
/// bundles (all bundles must share one grid).
pub fn estimate_covariation(
    bundles: &[LabeledPathBundle],
    label_i: usize,
    label_j: usize,
) -> Result<CovariationCurve> {
    if bundles.is_empty() {
        return Err(Error::parameter("covariation: empty bundle set"));
    }
    let mut acc = CovariationAccumulator::new(label_i, label_j);
    for b in bundles {
        acc.push(b)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn scbm_replicates(
        initial: &[f64],
        speed: f64,
        horizon: f64,
        step: f64,
        n: usize,
        seed: u64,
    ) -> Vec<LabeledPathBundle> {
        (0..n)
            .map(|k| {
                let mut stream = RngStream::new(seed, k as u64);
                simulate_scbm(initial, speed, horizon, step, &mut stream).unwrap()
            })
            .collect()
    }

    #[test]
    fn diagonal_covariation_is_rho_t() {
        let (rho, t_end, dt) = (1.5, 0.5, 1e-2);
        let bundles = scbm_replicates(&[0.0, 2.0], rho, t_end, dt, 400, 41);
        let curve = estimate_covariation(&bundles, 0, 0).unwrap();
        for &frac in &[0.25, 0.5, 1.0] {
            let k = ((curve.times.len() - 1) as f64 * frac) as usize;
            let expected = rho * curve.times[k];
            let z = (curve.mean[k] - expected) / curve.se[k];
            assert!(z.abs() < 3.0, "t = {}, z = {z}", curve.times[k]);
        }
    }

    #[test]
    fn far_apart_pair_has_null_covariation() {
        let bundles = scbm_replicates(&[0.0, 25.0], 1.0, 0.2, 1e-2, 400, 42);
        let curve = estimate_covariation(&bundles, 0, 1).unwrap();
        let k = curve.times.len() - 1;
        let z = if curve.se[k] == 0.0 {
            0.0
        } else {
            curve.mean[k] / curve.se[k]
        };
        assert!(z.abs() < 3.0, "z = {z}");
    }

    #[test]
    fn merged_from_start_covariation_is_rho_t() {
        let (rho, t_end, dt) = (1.0, 0.5, 1e-2);
        let bundles = scbm_replicates(&[1.0, 1.0], rho, t_end, dt, 400, 43);
        let curve = estimate_covariation(&bundles, 0, 1).unwrap();
        let k = curve.times.len() - 1;
        let expected = rho * t_end;
        let z = (curve.mean[k] - expected) / curve.se[k];
        assert!(z.abs() < 3.0, "z = {z}");
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let mut a = scbm_replicates(&[0.0, 1.0], 1.0, 0.2, 1e-2, 2, 44);
        let b = scbm_replicates(&[0.0, 1.0], 1.0, 0.2, 2e-2, 1, 45);
        a.extend(b);
        assert!(estimate_covariation(&a, 0, 1).is_err());
    }
}
