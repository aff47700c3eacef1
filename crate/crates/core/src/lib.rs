//! Simple Markov counting processes, their time change by an independent
//! unit-rate Poisson clock, and the compound processes that result.
//!
//! If `X` is simple with rate function `λ_X` and `N` is a unit-rate Poisson
//! process, `S(t) = X(N(t))` is a Markov counting process whose transition
//! rates are the law of `X(1)`: `q_{s,k} = P(X(1) = s + k | X(0) = s)` and
//! `λ_S(s) = 1 - e^{-λ_X(s)}`. The crate simulates all three paths, computes
//! those kernels exactly or by uniformization, derives infinitesimal moments,
//! checks everything by Monte Carlo, and builds an over-dispersed SIR system
//! from the resulting blocks.

pub mod error;
pub mod estimator;
pub mod kernel;
pub mod moments;
pub mod process;
pub mod rates;
pub mod rng;
pub mod sir;
pub mod trajectory;

pub use error::{Error, Result};
pub use kernel::KernelDistribution;
pub use process::{ProcessSpec, RateFunctionSpec, StateCount};
pub use rng::RngStream;
pub use trajectory::{compose, simulate_poisson_unit, simulate_simple, Event, Trajectory};

/// Reals in CSV output: 17 significant digits, `.` separator.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
