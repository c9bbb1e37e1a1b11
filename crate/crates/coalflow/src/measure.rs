//! Finite atomic measures on the line and sampleable initial states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A finite list of `(position, mass)` atoms; the state of an atomic
/// measure-valued process at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(pos, mass) in &atoms {
            if !pos.is_finite() {
                return Err(Error::parameter(format!("atom position {pos} not finite")));
            }
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::parameter(format!(
                    "atom mass must be finite and >= 0, got {mass}"
                )));
            }
        }
        Ok(AtomicMeasure { atoms })
    }

    pub fn delta(position: f64, mass: f64) -> Result<Self> {
        AtomicMeasure::new(vec![(position, mass)])
    }

    pub fn empty() -> Self {
        AtomicMeasure { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }

    /// `<phi, mu>`: linear, order-independent.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(x, m)| m * phi(x)).sum()
    }

    /// Draw one location from the normalized measure.
    pub fn sample_location(&self, stream: &mut RngStream) -> f64 {
        let total = self.total_mass();
        debug_assert!(total > 0.0);
        let u = stream.uniform() * total;
        let mut acc = 0.0;
        for &(x, m) in &self.atoms {
            acc += m;
            if u < acc {
                return x;
            }
        }
        self.atoms.last().expect("non-empty measure").0
    }
}

/// An initial state that can be sampled location-by-location: either an
/// explicit atomic measure or a named density carrying a total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceMeasure {
    Atomic { measure: AtomicMeasure },
    Uniform { lo: f64, hi: f64, mass: f64 },
    Gaussian { mean: f64, sd: f64, mass: f64 },
}

impl SourceMeasure {
    pub fn atomic(measure: AtomicMeasure) -> Self {
        SourceMeasure::Atomic { measure }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceMeasure::Atomic { .. } => Ok(()),
            SourceMeasure::Uniform { lo, hi, mass } => {
                if !(hi > lo) || !mass.is_finite() || *mass < 0.0 {
                    Err(Error::parameter("uniform source: need hi > lo, mass >= 0"))
                } else {
                    Ok(())
                }
            }
            SourceMeasure::Gaussian { sd, mass, .. } => {
                if !(*sd > 0.0) || !mass.is_finite() || *mass < 0.0 {
                    Err(Error::parameter("gaussian source: need sd > 0, mass >= 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            SourceMeasure::Atomic { measure } => measure.total_mass(),
            SourceMeasure::Uniform { mass, .. } => *mass,
            SourceMeasure::Gaussian { mass, .. } => *mass,
        }
    }

    pub fn sample_location(&self, stream: &mut RngStream) -> f64 {
        match self {
            SourceMeasure::Atomic { measure } => measure.sample_location(stream),
            SourceMeasure::Uniform { lo, hi, .. } => lo + (hi - lo) * stream.uniform(),
            SourceMeasure::Gaussian { mean, sd, .. } => mean + sd * stream.standard_normal(),
        }
    }
}
