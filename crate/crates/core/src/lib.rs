//! Performance analysis of an EV charging lot with `K` spaces and power for
//! `M` cars at full rate.
//!
//! The central output is the probability that an EV leaves fully charged.
//! It is computed exactly from the `(U, Q)` Markov chain ([`exact`]),
//! bracketed by bounds, approximated by a fluid fixed point ([`fluid`]) and
//! a square-root-staffing diffusion ([`diffusion`]), and estimated by
//! simulation ([`des`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod des;
pub mod diffusion;
pub mod error;
pub mod exact;
pub mod fluid;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use des::{simulate_general, simulate_markovian, RunLength, SimConfig, SimEstimates};
pub use diffusion::{DiffusionSpec, PiecewiseGaussianDensity, ScalingRegime, SdeConfig, SdePath};
pub use error::{Error, Result};
pub use exact::{
    bounds, erlang_b, exact_success, lower_bound, metrics, stationary_distribution, upper_bound, BoundsResult,
    PerformanceMetrics, StationaryDistribution,
};
pub use fluid::{fluid_fixed_point, fluid_success, DistributionSpec, FluidSolution, Regime};
pub use model::{ModelParams, StateUQ, Transition};
pub use stats::{CiMethod, EstimateWithCI};
