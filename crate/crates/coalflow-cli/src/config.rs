//! Experiment configuration: a single JSON document, every field
//! overridable from the command line, echoed verbatim into each run's
//! manifest.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use coalflow::branching::BranchingRate;
use coalflow::error::{Error, Result};
use coalflow::flows::InteractionKernel;
use coalflow::measure::{AtomicMeasure, SourceMeasure};
use coalflow::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Scbm,
    Sibm,
    Feller,
    Excursion,
    Scsm,
    Sdsm,
    DualCheck,
    Scaling,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "scbm" => ExperimentKind::Scbm,
            "sibm" => ExperimentKind::Sibm,
            "feller" => ExperimentKind::Feller,
            "excursion" => ExperimentKind::Excursion,
            "scsm" => ExperimentKind::Scsm,
            "sdsm" => ExperimentKind::Sdsm,
            "dual-check" => ExperimentKind::DualCheck,
            "scaling" => ExperimentKind::Scaling,
            other => {
                return Err(Error::parameter(format!(
                    "unknown experiment kind '{other}' (expected scbm | sibm | feller | \
                     excursion | scsm | sdsm | dual-check | scaling)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub experiment: Option<ExperimentKind>,
    /// Starting points for path experiments; when empty, `m` evenly
    /// spaced points `0, 0.5, 1, ...` are used.
    pub starts: Vec<f64>,
    /// Label count (path experiments) or moment order (dual-check).
    pub m: usize,
    /// Carrier speed for coalescing-motion experiments.
    pub rho: f64,
    /// Kernel spec for interacting-motion experiments:
    /// `gauss[:width]` or `triangular:halfwidth`.
    pub kernel: String,
    /// Branching rate spec: `const:c` or `bump:base,amp`.
    pub sigma: String,
    /// Initial measure: `(x1,m1),(x2,m2),...`, `uniform:lo,hi,mass` or
    /// `gaussian:mean,sd,mass`.
    pub mu: String,
    /// Moment function for dual-check: `one` or `gauss`.
    pub f: String,
    /// Test functions for scaling tables: `gauss`, `sin`, `one`,
    /// `sq:scale`.
    pub phi: Vec<String>,
    pub thetas: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub cutoff: f64,
    /// Initial mass for the plain branching-diffusion experiment.
    pub x0: f64,
    /// Replicate count.
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Drop dead atoms from emitted measures.
    pub prune: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            experiment: None,
            starts: Vec::new(),
            m: 2,
            rho: 1.0,
            kernel: "gauss".into(),
            sigma: "const:1".into(),
            mu: "(0,1)".into(),
            f: "one".into(),
            phi: vec!["gauss".into()],
            thetas: vec![1.0, 4.0, 16.0, 64.0],
            t: 1.0,
            dt: 1e-3,
            cutoff: 0.1,
            x0: 1.0,
            n: 1000,
            seed: 0,
            out: PathBuf::from("runs"),
            prune: true,
        }
    }
}

impl SimulationConfig {
    pub fn starts_or_default(&self) -> Vec<f64> {
        if self.starts.is_empty() {
            (0..self.m).map(|i| 0.5 * i as f64).collect()
        } else {
            self.starts.clone()
        }
    }

    pub fn parse_sigma(&self) -> Result<BranchingRate> {
        parse_sigma(&self.sigma)
    }

    pub fn parse_kernel(&self) -> Result<InteractionKernel> {
        parse_kernel(&self.kernel)
    }

    pub fn parse_mu(&self) -> Result<SourceMeasure> {
        parse_mu(&self.mu)
    }

    pub fn parse_phis(&self) -> Result<Vec<TestFunction>> {
        self.phi.iter().map(|p| parse_phi(p)).collect()
    }

    /// Field-level validation, performed before any simulation starts.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_none() {
            return Err(Error::parameter("experiment kind is required"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::parameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::parameter(format!(
                "t must be positive, got {}",
                self.t
            )));
        }
        if self.n < 1 {
            return Err(Error::parameter("replicate count n must be >= 1"));
        }
        if self.m < 1 {
            return Err(Error::parameter("m must be >= 1"));
        }
        let sigma = self.parse_sigma()?;
        sigma.require_positive_infimum()?;
        self.parse_mu()?.validate()?;
        self.parse_kernel()?;
        self.parse_phis()?;
        for &theta in &self.thetas {
            if theta < 1.0 {
                return Err(Error::parameter(format!(
                    "thetas must be >= 1, got {theta}"
                )));
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

pub fn parse_sigma(spec: &str) -> Result<BranchingRate> {
    let lower = spec.trim().to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("const:") {
        let value: f64 = rest
            .parse()
            .map_err(|_| Error::parameter(format!("sigma: bad constant '{rest}'")))?;
        BranchingRate::constant(value)
    } else if let Some(rest) = lower.strip_prefix("bump:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::parameter(
                "sigma bump spec needs 'bump:base,amp'".to_string(),
            ));
        }
        let base: f64 = parts[0]
            .parse()
            .map_err(|_| Error::parameter("sigma: bad bump base"))?;
        let amp: f64 = parts[1]
            .parse()
            .map_err(|_| Error::parameter("sigma: bad bump amp"))?;
        BranchingRate::gauss_bump(base, amp)
    } else {
        Err(Error::parameter(format!(
            "sigma spec '{spec}' not recognized (const:c | bump:base,amp)"
        )))
    }
}

pub fn parse_kernel(spec: &str) -> Result<InteractionKernel> {
    let lower = spec.trim().to_ascii_lowercase();
    if lower == "gauss" {
        return Ok(InteractionKernel::standard_gaussian());
    }
    if let Some(rest) = lower.strip_prefix("gauss:") {
        let width: f64 = rest
            .parse()
            .map_err(|_| Error::parameter("kernel: bad gaussian width"))?;
        return InteractionKernel::gaussian(width);
    }
    if let Some(rest) = lower.strip_prefix("triangular:") {
        let halfwidth: f64 = rest
            .parse()
            .map_err(|_| Error::parameter("kernel: bad triangular halfwidth"))?;
        return InteractionKernel::triangular(halfwidth);
    }
    Err(Error::parameter(format!(
        "kernel spec '{spec}' not recognized (gauss | gauss:w | triangular:w)"
    )))
}

pub fn parse_mu(spec: &str) -> Result<SourceMeasure> {
    let trimmed = spec.trim();
    let lower = trimmed.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("uniform:") {
        let p: Vec<&str> = rest.split(',').collect();
        if p.len() != 3 {
            return Err(Error::parameter(
                "mu uniform spec needs 'uniform:lo,hi,mass'",
            ));
        }
        let get = |i: usize| -> Result<f64> {
            p[i].parse()
                .map_err(|_| Error::parameter(format!("mu: bad number '{}'", p[i])))
        };
        let source = SourceMeasure::Uniform {
            lo: get(0)?,
            hi: get(1)?,
            mass: get(2)?,
        };
        source.validate()?;
        return Ok(source);
    }
    if let Some(rest) = lower.strip_prefix("gaussian:") {
        let p: Vec<&str> = rest.split(',').collect();
        if p.len() != 3 {
            return Err(Error::parameter(
                "mu gaussian spec needs 'gaussian:mean,sd,mass'",
            ));
        }
        let get = |i: usize| -> Result<f64> {
            p[i].parse()
                .map_err(|_| Error::parameter(format!("mu: bad number '{}'", p[i])))
        };
        let source = SourceMeasure::Gaussian {
            mean: get(0)?,
            sd: get(1)?,
            mass: get(2)?,
        };
        source.validate()?;
        return Ok(source);
    }
    // atom list "(x1,m1),(x2,m2),..."
    let mut atoms = Vec::new();
    let mut rest = trimmed;
    while let Some(start) = rest.find('(') {
        let end = rest[start..].find(')').ok_or_else(|| {
            Error::parameter(format!("mu spec '{spec}' has unbalanced parentheses"))
        })? + start;
        let inner = &rest[start + 1..end];
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::parameter(format!(
                "mu atom '({inner})' is not of the form (position,mass)"
            )));
        }
        let pos: f64 = parts[0]
            .parse()
            .map_err(|_| Error::parameter(format!("mu: bad position '{}'", parts[0])))?;
        let mass: f64 = parts[1]
            .parse()
            .map_err(|_| Error::parameter(format!("mu: bad mass '{}'", parts[1])))?;
        atoms.push((pos, mass));
        rest = &rest[end + 1..];
    }
    if atoms.is_empty() {
        return Err(Error::parameter(format!("mu spec '{spec}' has no atoms")));
    }
    Ok(SourceMeasure::atomic(AtomicMeasure::new(atoms)?))
}

pub fn parse_phi(spec: &str) -> Result<TestFunction> {
    let lower = spec.trim().to_ascii_lowercase();
    if lower == "gauss" {
        return Ok(TestFunction::GaussExp);
    }
    if lower == "sin" {
        return Ok(TestFunction::SinX);
    }
    if lower == "one" {
        return Ok(TestFunction::One);
    }
    if let Some(rest) = lower.strip_prefix("sq:") {
        let scale: f64 = rest
            .parse()
            .map_err(|_| Error::parameter("phi: bad sq scale"))?;
        if !(scale > 0.0) {
            return Err(Error::parameter("phi: sq scale must be positive"));
        }
        return Ok(TestFunction::ClippedSquare { scale });
    }
    Err(Error::parameter(format!(
        "phi spec '{spec}' not recognized (gauss | sin | one | sq:scale)"
    )))
}
