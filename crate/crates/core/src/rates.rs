//! Transition rates of the time-changed process `S(t) = X(N(t))`.
//!
//! The rate of a jump of size `k >= 1` out of `s` is the kernel probability
//! `P(X(1) = s + k | X(0) = s)`, and the rate function is
//! `λ_S(s) = 1 - e^{-λ_X(s)}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{require_positive, Error, Result};
use crate::fmt_real;
use crate::kernel::KernelDistribution;
use crate::process::{ProcessSpec, StateCount};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRateRow {
    pub state: StateCount,
    /// `q_{s,k}` for `k >= 1`.
    pub rates: BTreeMap<u64, f64>,
    /// `λ_S(s)`.
    pub rate_function: f64,
    pub tail_bound: f64,
    #[serde(skip)]
    pub tail_moment_factor: f64,
}

impl TransitionRateRow {
    pub fn rate(&self, k: u64) -> f64 {
        self.rates.get(&k).copied().unwrap_or(0.0)
    }

    /// `s,k,q` rows for `k = 1..=kmax`, then the `s,lambda_S` summary.
    pub fn to_csv(&self, kmax: u64) -> String {
        let mut out = String::from("s,k,q\n");
        for k in 1..=kmax {
            let _ = writeln!(out, "{},{},{}", self.state, k, fmt_real(self.rate(k)));
        }
        out.push_str("s,lambda_S\n");
        let _ = writeln!(out, "{},{}", self.state, fmt_real(self.rate_function));
        out
    }
}

pub fn rates_from_kernel(kernel: &KernelDistribution) -> TransitionRateRow {
    let rates = kernel
        .probs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, p)| (k as u64, *p))
        .collect();
    TransitionRateRow {
        state: kernel.base_state,
        rates,
        rate_function: 1.0 - kernel.prob(0),
        tail_bound: kernel.tail_bound,
        tail_moment_factor: kernel.tail_moment_factor,
    }
}

/// `λ_S(s) = 1 - e^{-λ_X(s)}`.
pub fn rate_function_s(spec: &ProcessSpec, s: StateCount) -> Result<f64> {
    Ok(-(-spec.rate_at(s)?).exp_m1())
}

/// The three families whose time-changed rates have a textbook pmf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormFamily {
    /// Poisson pmf with mean `alpha`.
    Poisson { alpha: f64 },
    /// Negative binomial: `s` failures until stopping, success `1 - e^{-beta}`.
    Birth { beta: f64 },
    /// Binomial: `d0 - s` trials, success `1 - e^{-delta}`.
    Death { delta: f64, d0: u64 },
}

/// Direct evaluation of `q_{s,k}` for the closed-form families, by running
/// products rather than through a kernel.
pub fn corollary_rates(family: ClosedFormFamily, s: StateCount, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::DomainMsg("transition rates need a jump size k >= 1".into()));
    }
    match family {
        ClosedFormFamily::Poisson { alpha } => {
            require_positive("alpha", alpha)?;
            let mut term = (-alpha).exp();
            for i in 1..=k {
                term *= alpha / i as f64;
            }
            Ok(term)
        }
        ClosedFormFamily::Birth { beta } => {
            require_positive("beta", beta)?;
            if s == 0 {
                return Err(Error::DomainMsg("negative binomial rates need s >= 1".into()));
            }
            let failure = (-beta).exp();
            let success = -(-beta).exp_m1();
            // C(s + k - 1, k) success^k, built factor by factor.
            let mut term = 1.0;
            for i in 1..=k {
                term *= (s + i - 1) as f64 / i as f64 * success;
            }
            Ok(term * failure.powf(s as f64))
        }
        ClosedFormFamily::Death { delta, d0 } => {
            require_positive("delta", delta)?;
            if s >= d0 || k > d0 - s {
                return Err(Error::DomainMsg(format!(
                    "binomial rates need s < d0 and k <= d0 - s (s = {s}, k = {k}, d0 = {d0})"
                )));
            }
            let trials = d0 - s;
            let success = -(-delta).exp_m1();
            let mut term = 1.0;
            for i in 1..=k {
                term *= (trials - k + i) as f64 / i as f64;
            }
            Ok(term * success.powf(k as f64) * (-delta * (trials - k) as f64).exp())
        }
    }
}
