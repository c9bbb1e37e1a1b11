//! Monte Carlo toolkit for one-dimensional coalescing and interacting
//! Brownian flows, Feller branching diffusions and their excursion
//! ensembles, the purely atomic superprocesses built from them (SCSM and
//! SDSM), and the Kingman-coalescent moment dual.
//!
//! The crate is organised around a few simulation layers:
//!
//! * [`rng`] — deterministic, stream-splittable randomness; one stream per
//!   replicate makes every experiment reproducible and embarrassingly
//!   parallel.
//! * [`flows`] — systems of coalescing Brownian motions (SCBM), the flow
//!   extension kernel, and interacting Brownian motions (SIBM) driven by a
//!   covariance kernel `rho`.
//! * [`branching`] — exact Feller branching transitions, the excursion law
//!   with entrance density `4 t^-2 exp(-2y/t)`, Poisson excursion
//!   ensembles, and position-dependent time changes.
//! * [`scsm`] / [`sdsm`] — atomic measure-valued processes assembled from
//!   carriers plus time-changed excursion masses, and the theta-rescaling
//!   experiments connecting the two.
//! * [`dual`] — the Kingman coalescent dual process and an unbiased
//!   estimator of mixed moments that cross-checks the forward simulators.
//! * [`stats`] — the statistical instruments (KS tests, chi-square GOF,
//!   martingale z-tests, realized covariation) used by the check suites.
//!
//! Replicated experiments always draw replicate `k` from
//! `RngStream::new(seed, k)`, so results are byte-identical for a fixed
//! seed no matter how many worker threads run the replicates.

// Validation deliberately writes `!(x > 0.0)` so that NaN fails the check;
// `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod dual;
pub mod error;
pub mod flows;
pub mod io;
pub mod linalg;
pub mod measure;
pub mod rng;
pub mod scsm;
pub mod sdsm;
pub mod stats;
pub mod suite;
pub mod testfn;

pub use error::{Error, Result};
pub use rng::RngStream;
