//! Sharp variance bounds for the difference-in-means and Wald estimators in
//! finite-population completely randomized experiments.
//!
//! All potential outcomes are treated as fixed; randomness enters only through
//! the treatment assignment. The unidentifiable part of the estimator variance
//! is bounded through quantile couplings of stratum-conditional outcome
//! distributions, which gives the tightest bounds available from the
//! stratum shares and the per-arm conditional distributions.
//!
//! Module map:
//!
//! * [`population`] finite populations, observed samples and descriptive functionals
//! * [`transport`] step distribution functions and the quantile-coupling integrals
//! * [`bounds`] population-level bound families and the extremal populations
//! * [`estimate`] plug-in estimators and intervals under perfect compliance
//! * [`late`] the Wald estimator and its bound estimators under noncompliance
//! * [`simulate`] data generators, complete randomization and the Monte Carlo engine

pub mod bounds;
pub mod error;
pub mod estimate;
pub mod late;
pub mod normal;
pub mod population;
pub mod rng;
pub mod simulate;
pub mod transport;

pub use error::{Error, Result};
