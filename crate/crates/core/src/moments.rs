//! Infinitesimal moments of time-changed processes, jump-size moments, and
//! deterministic approximations.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{require_positive, Error, Result};
use crate::kernel::kernel_for;
use crate::process::{ProcessSpec, RateFunctionSpec, StateCount};
use crate::rates::{rates_from_kernel, TransitionRateRow};

/// Step of the fixed-step Runge-Kutta integrator behind [`ode_path`].
pub const ODE_STEP: f64 = 1e-3;

/// Kernel tolerance used when moments have to come from a kernel.
const MOMENT_KERNEL_EPS: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSummary {
    pub state: StateCount,
    /// `μ_dS(s)`.
    pub inf_mean: f64,
    /// `σ²_dS(s)`.
    pub inf_var: f64,
    /// `σ²_dS / μ_dS`; absent when the state is absorbing.
    pub dispersion: Option<f64>,
    /// Bound on the truncation error of `inf_mean` and `inf_var`.
    pub error_bound: f64,
}

/// `μ = Σ k q_{s,k}`, `σ² = Σ k² q_{s,k}` over the listed rates.
///
/// The omitted mass is bounded through the row's tail moment factor:
/// `error_bound = tail_bound · (K + G)²`, which bounds both moments since
/// jump sizes are at least 1.
pub fn moments_from_rates(row: &TransitionRateRow) -> MomentSummary {
    let (mean, var) = row.rates.iter().fold((0.0, 0.0), |(m, v), (&k, &q)| {
        let k = k as f64;
        (m + k * q, v + k * k * q)
    });
    let error_bound = if row.tail_bound == 0.0 {
        0.0
    } else {
        row.tail_bound * row.tail_moment_factor
    };
    MomentSummary {
        state: row.state,
        inf_mean: mean,
        inf_var: var,
        dispersion: (mean > 0.0).then(|| var / mean),
        error_bound,
    }
}

/// Closed-form Poisson-Poisson moments as published:
/// `μ = α(1 - e^{-α})`, `σ² = α(1 + α)(1 - e^{-α})`, `D = 1 + α`.
///
/// These do not coincide with [`moments_from_rates`] on the Poisson kernel,
/// where `Σ k q_{s,k} = E[X(1)] = α` and `Σ k² q_{s,k} = α(1 + α)`; only the
/// dispersion index agrees. The state is irrelevant and reported as 0.
pub fn poisson_poisson_moments(alpha: f64) -> Result<MomentSummary> {
    require_positive("alpha", alpha)?;
    let jump_rate = -(-alpha).exp_m1();
    Ok(MomentSummary {
        state: 0,
        inf_mean: alpha * jump_rate,
        inf_var: alpha * (1.0 + alpha) * jump_rate,
        dispersion: Some(1.0 + alpha),
        error_bound: 0.0,
    })
}

/// Binomial-Poisson moments: `μ = (d0 - s)(1 - e^{-δ})`,
/// `σ² = μ [1 + (d0 - s - 1)(1 - e^{-δ})]`.
pub fn binomial_poisson_moments(delta: f64, d0: u64, s: StateCount) -> Result<MomentSummary> {
    require_positive("delta", delta)?;
    if s >= d0 {
        return Err(Error::DomainMsg(format!(
            "binomial-Poisson moments need s < d0 (s = {s}, d0 = {d0})"
        )));
    }
    let p = -(-delta).exp_m1();
    let dispersion = 1.0 + (d0 - s - 1) as f64 * p;
    let mean = (d0 - s) as f64 * p;
    Ok(MomentSummary {
        state: s,
        inf_mean: mean,
        inf_var: mean * dispersion,
        dispersion: Some(dispersion),
        error_bound: 0.0,
    })
}

/// Mean and variance of the size of a jump, given that one happens. `None`
/// at absorbing states.
///
/// For the Poisson base this is the zero-truncated Poisson law, not the raw
/// moments of `X(1)`.
pub fn event_size_moments(row: &TransitionRateRow) -> Option<(f64, f64)> {
    let total: f64 = row.rates.values().sum();
    if !(total > 0.0) {
        return None;
    }
    let (m1, m2) = row.rates.iter().fold((0.0, 0.0), |(a, b), (&k, &q)| {
        let k = k as f64;
        (a + k * q / total, b + k * k * q / total)
    });
    Some((m1, (m2 - m1 * m1).max(0.0)))
}

/// Infinitesimal moments at `s` by the closed form for the Poisson and
/// linear death families and from the kernel otherwise.
pub fn closed_or_numeric_moments(spec: &ProcessSpec, s: StateCount) -> Result<MomentSummary> {
    spec.rate.check_state(s)?;
    match spec.rate {
        RateFunctionSpec::Poisson { alpha } => {
            Ok(MomentSummary { state: s, ..poisson_poisson_moments(alpha)? })
        }
        RateFunctionSpec::LinearDeathCounting { delta, d0 } if s < d0 => {
            binomial_poisson_moments(delta, d0, s)
        }
        _ => Ok(moments_from_rates(&rates_from_kernel(&kernel_for(spec, s, MOMENT_KERNEL_EPS)?))),
    }
}

/// Deterministic path on `t_grid` (which must start at 0 and increase).
///
/// Integrates `dx/dt = λ_X(x)` or, for the time-changed process,
/// `ds/dt = μ_dS(s)` with classical RK4 at step at most [`ODE_STEP`].
/// Families without a continuous closed form use their rate (or the drift
/// of the integer state below `x`) as a step function.
pub fn ode_path(
    spec: &ProcessSpec,
    time_changed: bool,
    s0: StateCount,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    spec.rate.check_state(s0)?;
    match t_grid.first() {
        Some(&t0) if t0 == 0.0 => {}
        _ => return Err(Error::InvalidParameter("time grid must start at 0".into())),
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    let mut drift = Drift::new(spec, time_changed);
    let mut x = s0 as f64;
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(x);
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / ODE_STEP).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            let k1 = drift.at(x)?;
            let k2 = drift.at(x + 0.5 * h * k1)?;
            let k3 = drift.at(x + 0.5 * h * k2)?;
            let k4 = drift.at(x + h * k3)?;
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(x);
    }
    Ok(out)
}

struct Drift<'a> {
    spec: &'a ProcessSpec,
    time_changed: bool,
    cache: HashMap<StateCount, f64>,
}

impl<'a> Drift<'a> {
    fn new(spec: &'a ProcessSpec, time_changed: bool) -> Self {
        Self {
            spec,
            time_changed,
            cache: HashMap::new(),
        }
    }

    fn at(&mut self, x: f64) -> Result<f64> {
        let x = x.max(0.0);
        let rate = &self.spec.rate;
        if !self.time_changed {
            return Ok(match *rate {
                RateFunctionSpec::Poisson { alpha } => alpha,
                RateFunctionSpec::LinearBirth { beta } => beta * x,
                RateFunctionSpec::LinearDeathCounting { delta, d0 } => {
                    delta * (d0 as f64 - x).max(0.0)
                }
                RateFunctionSpec::NonlinearDeathCounting { d0 } => x * (d0 as f64 - x).max(0.0),
                RateFunctionSpec::GeneralTable { .. } => rate.rate_unchecked(x.floor() as u64),
            });
        }
        match *rate {
            RateFunctionSpec::Poisson { alpha } => Ok(alpha * -(-alpha).exp_m1()),
            RateFunctionSpec::LinearDeathCounting { delta, d0 } => {
                Ok((d0 as f64 - x).max(0.0) * -(-delta).exp_m1())
            }
            _ => {
                let mut state = x.floor() as u64;
                if let Some(top) = rate.max_state() {
                    state = state.min(top);
                }
                if let Some(&mu) = self.cache.get(&state) {
                    return Ok(mu);
                }
                let mu = closed_or_numeric_moments(self.spec, state)?.inf_mean;
                self.cache.insert(state, mu);
                Ok(mu)
            }
        }
    }
}
