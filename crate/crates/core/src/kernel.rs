//! Distribution of `X(t)` given `X(0) = s`: closed forms for the Poisson,
//! linear birth and linear death families, uniformization for any simple
//! process on a bounded window, and the gamma-mixed Poisson benchmark.
//!
//! Every kernel carries `tail_bound`, the mass it does not list. Truncation
//! points are chosen with a certified geometric majorant of the omitted
//! terms, and `tail_bound` is then the exact complement of the listed mass.

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use statrs::function::factorial::{ln_binomial, ln_factorial};
use statrs::function::gamma::ln_gamma;

use crate::error::{require_positive, Error, Result};
use crate::process::{ProcessSpec, RateFunctionSpec, StateCount};

/// `P(X(t) = s + k | X(0) = s)` for `k = 0..probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDistribution {
    pub base_state: StateCount,
    pub probs: Vec<f64>,
    pub tail_bound: f64,
    /// `M` such that the omitted mass contributes at most `tail_bound * M` to
    /// the second moment of the jump size. Infinite when no majorant is known.
    pub tail_moment_factor: f64,
}

impl KernelDistribution {
    pub fn point_mass(base_state: StateCount) -> Self {
        Self {
            base_state,
            probs: vec![1.0],
            tail_bound: 0.0,
            tail_moment_factor: 0.0,
        }
    }

    pub fn prob(&self, k: u64) -> f64 {
        usize::try_from(k).ok().and_then(|i| self.probs.get(i)).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_bound
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel serializes")
    }

    /// Builds from a listed prefix, closing with the complement. `next_ratio`
    /// bounds `p_{k+1} / p_k` for every omitted `k`.
    fn truncated(base_state: StateCount, probs: Vec<f64>, next_ratio: f64) -> Self {
        let tail_bound = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        let last = probs.len().saturating_sub(1) as f64;
        Self {
            base_state,
            probs,
            tail_bound,
            tail_moment_factor: geometric_moment_factor(last, next_ratio),
        }
    }
}

impl Serialize for KernelDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Probs<'a>(&'a [f64]);
        impl Serialize for Probs<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (k, p) in self.0.iter().enumerate() {
                    map.serialize_entry(&k.to_string(), p)?;
                }
                map.end()
            }
        }
        let mut st = serializer.serialize_struct("KernelDistribution", 3)?;
        st.serialize_field("s", &self.base_state)?;
        st.serialize_field("probs", &Probs(&self.probs))?;
        st.serialize_field("tail_bound", &self.tail_bound)?;
        st.end()
    }
}

/// For a tail starting after index `last` whose successive ratios are at most
/// `r < 1`, the conditional law of the omitted index is stochastically below
/// `last + 1 + Geometric(r)`, whose second moment is at most
/// `(last + G)^2` with `G = 1 + m + sqrt(v)`, `m = r / (1 - r)` and
/// `v = r (1 + r) / (1 - r)^2`.
fn geometric_moment_factor(last: f64, r: f64) -> f64 {
    if !(r < 1.0) {
        return f64::INFINITY;
    }
    let r = r.max(0.0);
    let m = r / (1.0 - r);
    let v = r * (1.0 + r) / ((1.0 - r) * (1.0 - r));
    let g = 1.0 + m + v.sqrt();
    (last + g) * (last + g)
}

fn require_tolerance(eps: f64) -> Result<()> {
    require_positive("tolerance", eps)?;
    if eps >= 1.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be < 1, got {eps}")));
    }
    Ok(())
}

/// Longest listed prefix of a truncated series. Heavier kernels report the
/// rest in `tail_bound` without a moment majorant.
pub const MAX_LISTED_TERMS: usize = 1 << 20;

/// Extends `pmf(0), pmf(1), ...` until the omitted tail is certified below
/// `eps` or [`MAX_LISTED_TERMS`] is reached (then the ratio returned is 1).
/// `ratio_after(k)` must bound `pmf(j + 1) / pmf(j)` for all `j >= k`.
fn truncate_series(
    eps: f64,
    pmf: impl Fn(u64) -> f64,
    ratio_after: impl Fn(u64) -> f64,
) -> (Vec<f64>, f64) {
    let mut probs = vec![pmf(0)];
    loop {
        let k = (probs.len() - 1) as u64;
        let r = ratio_after(k + 1);
        if r < 1.0 {
            let next = pmf(k + 1);
            if next / (1.0 - r) <= eps {
                return (probs, r);
            }
        }
        if probs.len() >= MAX_LISTED_TERMS {
            return (probs, 1.0);
        }
        probs.push(pmf(k + 1));
    }
}

/// `X(1) ~ Poisson(alpha)` whatever the starting state.
pub fn poisson_kernel(alpha: f64, s: StateCount, eps: f64) -> Result<KernelDistribution> {
    poisson_kernel_at(alpha, s, 1.0, eps)
}

pub(crate) fn poisson_kernel_at(alpha: f64, s: StateCount, t: f64, eps: f64) -> Result<KernelDistribution> {
    require_positive("alpha", alpha)?;
    require_positive("t", t)?;
    require_tolerance(eps)?;
    let mean = alpha * t;
    let ln_mean = mean.ln();
    let pmf = |k: u64| (k as f64 * ln_mean - mean - ln_factorial(k)).exp();
    let (probs, r) = truncate_series(eps, pmf, |k| mean / (k as f64 + 1.0));
    Ok(KernelDistribution::truncated(s, probs, r))
}

/// Negative binomial: `s` failures until stopping, success probability
/// `1 - e^{-beta}`. State 0 is absorbing; pass `point_mass_at_zero` to get
/// the trivial kernel there instead of an error.
pub fn birth_kernel(
    beta: f64,
    s: StateCount,
    eps: f64,
    point_mass_at_zero: bool,
) -> Result<KernelDistribution> {
    require_positive("beta", beta)?;
    require_tolerance(eps)?;
    if s == 0 {
        return if point_mass_at_zero {
            Ok(KernelDistribution::point_mass(0))
        } else {
            Err(Error::Domain {
                family: "linear_birth",
                state: 0,
            })
        };
    }
    // ln(1 - e^{-beta}) and ln(e^{-beta}) without cancellation.
    let ln_success = (-(-beta).exp_m1()).ln();
    let success = -(-beta).exp_m1();
    let sf = s as f64;
    let pmf = |k: u64| {
        (ln_binomial(s + k - 1, k) - beta * sf + k as f64 * ln_success).exp()
    };
    // p_{k+1} / p_k = success (s + k) / (k + 1), non-increasing in k for s >= 1.
    let ratio = |k: u64| success * (sf + k as f64) / (k as f64 + 1.0);
    let (probs, r) = truncate_series(eps, pmf, ratio);
    Ok(KernelDistribution::truncated(s, probs, r))
}

/// Binomial with `d0 - s` trials and success probability `1 - e^{-delta}`.
pub fn death_kernel(delta: f64, d0: u64, s: StateCount) -> Result<KernelDistribution> {
    death_kernel_at(delta, d0, s, 1.0)
}

pub(crate) fn death_kernel_at(delta: f64, d0: u64, s: StateCount, t: f64) -> Result<KernelDistribution> {
    require_positive("delta", delta)?;
    if d0 == 0 {
        return Err(Error::InvalidParameter("d0 must be a positive integer".into()));
    }
    if s > d0 {
        return Err(Error::Domain {
            family: "linear_death",
            state: s,
        });
    }
    let trials = d0 - s;
    if trials == 0 {
        return Ok(KernelDistribution::point_mass(s));
    }
    let ln_success = (-(-delta * t).exp_m1()).ln();
    let ln_failure = -delta * t;
    let probs = (0..=trials)
        .map(|k| {
            (ln_binomial(trials, k) + k as f64 * ln_success + (trials - k) as f64 * ln_failure).exp()
        })
        .collect();
    Ok(KernelDistribution {
        base_state: s,
        probs,
        tail_bound: 0.0,
        tail_moment_factor: 0.0,
    })
}

/// Kernel at `t = 1` by closed form where one exists, otherwise by
/// uniformization with the family's default window.
pub fn kernel_for(spec: &ProcessSpec, s: StateCount, eps: f64) -> Result<KernelDistribution> {
    spec.rate.check_state(s)?;
    match spec.rate {
        RateFunctionSpec::Poisson { alpha } => poisson_kernel(alpha, s, eps),
        RateFunctionSpec::LinearBirth { beta } => birth_kernel(beta, s, eps, true),
        RateFunctionSpec::LinearDeathCounting { delta, d0 } => death_kernel(delta, d0, s),
        _ => uniformization_kernel(spec, s, 1.0, eps, None),
    }
}

/// Law of `X(t)` from `s`: closed forms with time-scaled parameters where
/// they exist, uniformization otherwise.
pub fn kernel_at(spec: &ProcessSpec, s: StateCount, t: f64, eps: f64) -> Result<KernelDistribution> {
    require_positive("t", t)?;
    spec.rate.check_state(s)?;
    match spec.rate {
        RateFunctionSpec::Poisson { alpha } => poisson_kernel_at(alpha, s, t, eps),
        RateFunctionSpec::LinearBirth { beta } => birth_kernel(beta * t, s, eps, true),
        RateFunctionSpec::LinearDeathCounting { delta, d0 } => death_kernel_at(delta, d0, s, t),
        _ => uniformization_kernel(spec, s, t, eps, None),
    }
}

/// Transient law of the time-changed process `S` over a duration `t`.
///
/// `λ_S <= 1`, so `S` uniformizes at rate 1, and the one-step matrix
/// `I + Q_S` is exactly the kernel of `X(1)`. Its `j`-th power is the kernel
/// of `X(j)`, giving `P(S(t) = s + k) = Σ_j e^{-t} t^j / j! · P(X(j) = s + k)`.
/// Poisson weights are truncated at `eps / 2`; each inner kernel is computed
/// to `eps / 2` and its omitted mass is carried into `tail_bound`.
pub fn time_changed_kernel(
    spec: &ProcessSpec,
    s: StateCount,
    t: f64,
    eps: f64,
) -> Result<KernelDistribution> {
    require_positive("t", t)?;
    require_tolerance(eps)?;
    spec.rate.check_state(s)?;
    if spec.rate.rate_unchecked(s) == 0.0 {
        return Ok(KernelDistribution::point_mass(s));
    }
    let weights = poisson_weights(t, eps / 2.0);
    let mut probs = vec![weights[0]];
    let mut moment_factor: f64 = 0.0;
    for (j, w) in weights.iter().enumerate().skip(1) {
        let inner = kernel_at(spec, s, j as f64, eps / 2.0)?;
        if probs.len() < inner.probs.len() {
            probs.resize(inner.probs.len(), 0.0);
        }
        for (acc, p) in probs.iter_mut().zip(&inner.probs) {
            *acc += w * p;
        }
        if inner.tail_bound > 0.0 {
            moment_factor = moment_factor.max(inner.tail_moment_factor);
        }
    }
    let tail_bound = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    // Missing Poisson weights leave mass inside the listed support.
    let w = (probs.len() - 1) as f64;
    Ok(KernelDistribution {
        base_state: s,
        probs,
        tail_bound,
        tail_moment_factor: moment_factor.max(w * w),
    })
}

/// Default top of the uniformization window for families on an unbounded
/// state space.
pub fn default_cap(rate: &RateFunctionSpec, s: StateCount, t: f64) -> Option<StateCount> {
    match *rate {
        RateFunctionSpec::LinearBirth { beta } => Some(s + (50.0 * (1.0 + beta * t)).ceil() as u64),
        RateFunctionSpec::Poisson { alpha } => {
            let mean = alpha * t;
            Some(s + (mean + 20.0 * mean.sqrt() + 50.0).ceil() as u64)
        }
        RateFunctionSpec::LinearDeathCounting { d0, .. }
        | RateFunctionSpec::NonlinearDeathCounting { d0 } => Some(d0),
        RateFunctionSpec::GeneralTable { ref rates } => Some((rates.len() as u64).max(s)),
    }
}

/// Number of uniformization steps `J` and their Poisson(`lt`) weights, with
/// `P(Poisson(lt) > J) <= eps` certified by the ratio bound
/// `w_{j+1} / w_j = lt / (j + 1)`.
fn poisson_weights(lt: f64, eps: f64) -> Vec<f64> {
    let ln_lt = lt.ln();
    let weight = |j: u64| (j as f64 * ln_lt - lt - ln_factorial(j)).exp();
    let mut weights = vec![weight(0)];
    loop {
        let j = (weights.len() - 1) as u64;
        let next = weight(j + 1);
        let r = lt / (j as f64 + 2.0);
        if r < 1.0 && next / (1.0 - r) <= eps {
            return weights;
        }
        weights.push(next);
    }
}

/// Transient law of `X(t)` from `s` by uniformization.
///
/// The window is `s..=cap`; the rate out of `cap` drains into an overflow
/// sink whose final mass is reported in `tail_bound` together with the
/// truncated Poisson weights (at most `eps / 2`). `cap = None` selects
/// [`default_cap`].
pub fn uniformization_kernel(
    spec: &ProcessSpec,
    s: StateCount,
    t: f64,
    eps: f64,
    cap: Option<StateCount>,
) -> Result<KernelDistribution> {
    require_positive("t", t)?;
    require_tolerance(eps)?;
    let rate = &spec.rate;
    rate.check_state(s)?;
    let cap = match cap.or_else(|| default_cap(rate, s, t)) {
        Some(c) if c >= s => c,
        Some(c) => {
            return Err(Error::Config(format!("state cap {c} lies below the start state {s}")))
        }
        None => return Err(Error::Config("unbounded rates need a state cap".into())),
    };
    if let Some(top) = rate.max_state() {
        if cap > top {
            return Err(Error::Config(format!("state cap {cap} exceeds the largest state {top}")));
        }
    }
    let width = usize::try_from(cap - s + 1)
        .map_err(|_| Error::Config("uniformization window too large".into()))?;
    let rates: Vec<f64> = (0..width).map(|i| rate.rate_unchecked(s + i as u64)).collect();
    let lambda = rates.iter().copied().fold(0.0, f64::max);
    if !lambda.is_finite() {
        return Err(Error::Config("non-finite rate inside the window".into()));
    }
    // A simple process that starts absorbed never moves.
    if rates[0] == 0.0 {
        return Ok(KernelDistribution::point_mass(s));
    }
    let moves: Vec<f64> = rates.iter().map(|r| r / lambda).collect();

    let weights = poisson_weights(lambda * t, eps / 2.0);
    let mut current = vec![0.0; width];
    current[0] = 1.0;
    let mut sink = 0.0;
    let mut acc = vec![0.0; width];
    let mut sink_acc = 0.0;
    let mut next = vec![0.0; width];
    for (j, w) in weights.iter().enumerate() {
        if j > 0 {
            next.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..width {
                let mass = current[i];
                if mass == 0.0 {
                    continue;
                }
                let up = mass * moves[i];
                next[i] += mass - up;
                if i + 1 < width {
                    next[i + 1] += up;
                } else {
                    sink += up;
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        for (a, c) in acc.iter_mut().zip(&current) {
            *a += w * c;
        }
        sink_acc += w * sink;
    }
    let listed: f64 = acc.iter().sum();
    let tail_bound = (1.0 - listed).max(0.0);
    // Without overflow the omitted mass sits inside the window.
    let tail_moment_factor = if sink_acc > 0.0 {
        f64::INFINITY
    } else {
        let w = (width - 1) as f64;
        w * w
    };
    Ok(KernelDistribution {
        base_state: s,
        probs: acc,
        tail_bound,
        tail_moment_factor,
    })
}

/// `Γ(l/τ + k) / (k! Γ(l/τ) (1 + τ)^{l/τ} (1 + 1/τ)^k)`, evaluated in log
/// space: a Poisson law mixed over a gamma variable with shape `l/τ` and
/// scale `τ` (mean `l`, variance `l τ`).
pub fn gamma_mixed_poisson_prob(l: f64, k: u64, tau: f64) -> Result<f64> {
    require_positive("l", l)?;
    require_positive("tau", tau)?;
    Ok(gamma_mixed_ln_prob(l / tau, k, tau).exp())
}

fn gamma_mixed_ln_prob(shape: f64, k: u64, tau: f64) -> f64 {
    ln_gamma(shape + k as f64) - ln_factorial(k) - ln_gamma(shape)
        - shape * tau.ln_1p()
        - k as f64 * (1.0 / tau).ln_1p()
}

/// The gamma-mixed Poisson pmf truncated with a certified tail below `eps`.
pub fn gamma_mixed_poisson_kernel(l: f64, tau: f64, eps: f64) -> Result<KernelDistribution> {
    require_positive("l", l)?;
    require_positive("tau", tau)?;
    require_tolerance(eps)?;
    let shape = l / tau;
    let rho = tau / (1.0 + tau);
    let pmf = |k: u64| gamma_mixed_ln_prob(shape, k, tau).exp();
    // p_{k+1} / p_k = rho (shape + k) / (k + 1), monotone in k.
    let ratio = |k: u64| rho * ((shape + k as f64) / (k as f64 + 1.0)).max(1.0);
    let (probs, r) = truncate_series(eps, pmf, ratio);
    Ok(KernelDistribution::truncated(0, probs, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn poisson_examples() {
        let k = poisson_kernel(1.0, 0, 1e-12).unwrap();
        close(k.prob(1), 0.367_879_441_171_442_3, 1e-15);
        let shifted = poisson_kernel(1.0, 5, 1e-12).unwrap();
        assert_eq!(k.probs, shifted.probs);
        close(poisson_kernel(2.0, 0, 1e-12).unwrap().prob(0), 0.135_335_283_236_612_7, 1e-15);
    }

    #[test]
    fn birth_examples() {
        close(birth_kernel(0.3, 1, 1e-12, false).unwrap().prob(0), 0.740_818_220_681_717_8, 1e-15);
        // C(2,1) e^{-0.6} (1 - e^{-0.3})
        let expected = 2.0 * (-0.6f64).exp() * (1.0 - (-0.3f64).exp());
        close(birth_kernel(0.3, 2, 1e-12, false).unwrap().prob(1), expected, 1e-15);
        close(expected, 0.284_484, 1e-6);
        let heavy = birth_kernel(40.0, 1, 1e-12, false).unwrap();
        assert!(heavy.prob(0) < 1e-15);
        assert!(heavy.probs.len() <= MAX_LISTED_TERMS);
        close(heavy.total_mass(), 1.0, 1e-12);
        assert!(heavy.tail_moment_factor.is_infinite());
    }

    #[test]
    fn birth_at_zero() {
        assert!(matches!(
            birth_kernel(0.3, 0, 1e-12, false),
            Err(Error::Domain { .. })
        ));
        assert_eq!(birth_kernel(0.3, 0, 1e-12, true).unwrap(), KernelDistribution::point_mass(0));
    }

    #[test]
    fn death_examples() {
        let absorbed = death_kernel(0.7, 10, 10).unwrap();
        assert_eq!(absorbed.probs, vec![1.0]);
        close(death_kernel(0.7, 2, 1).unwrap().prob(1), 0.503_414_696_208_590_5, 1e-15);
        let k = death_kernel(0.7, 2, 0).unwrap();
        assert_eq!(k.probs.len(), 3);
        close(k.probs.iter().sum(), 1.0, 1e-15);
        assert_eq!(k.tail_bound, 0.0);
        assert!(death_kernel(0.7, 2, 3).is_err());
    }

    #[test]
    fn truncation_respects_tolerance() {
        for eps in [1e-3, 1e-8, 1e-14] {
            for k in [
                poisson_kernel(3.0, 0, eps).unwrap(),
                birth_kernel(0.7, 3, eps, false).unwrap(),
                gamma_mixed_poisson_kernel(0.5, 2.0, eps).unwrap(),
            ] {
                assert!(k.tail_bound <= eps);
                close(k.total_mass(), 1.0, 1e-12);
            }
        }
    }

    #[test]
    fn longer_truncation_keeps_prefix() {
        let short = birth_kernel(0.7, 3, 1e-4, false).unwrap();
        let long = birth_kernel(0.7, 3, 1e-14, false).unwrap();
        assert!(long.probs.len() > short.probs.len());
        assert_eq!(&long.probs[..short.probs.len()], &short.probs[..]);
    }

    #[test]
    fn uniformization_matches_poisson() {
        let spec = ProcessSpec::new(RateFunctionSpec::poisson(1.0).unwrap(), 0).unwrap();
        let numeric = uniformization_kernel(&spec, 0, 1.0, 1e-10, None).unwrap();
        let exact = poisson_kernel(1.0, 0, 1e-12).unwrap();
        for k in 0..numeric.probs.len().max(exact.probs.len()) as u64 {
            close(numeric.prob(k), exact.prob(k), 1e-8);
        }
    }

    #[test]
    fn uniformization_matches_death() {
        let spec = ProcessSpec::new(RateFunctionSpec::linear_death(0.7, 10).unwrap(), 0).unwrap();
        let numeric = uniformization_kernel(&spec, 3, 1.0, 1e-10, None).unwrap();
        let exact = death_kernel(0.7, 10, 3).unwrap();
        assert_eq!(numeric.probs.len(), exact.probs.len());
        for k in 0..exact.probs.len() as u64 {
            close(numeric.prob(k), exact.prob(k), 1e-8);
        }
    }

    #[test]
    fn uniformization_nonlinear_death_regression() {
        let spec = ProcessSpec::new(RateFunctionSpec::nonlinear_death(5).unwrap(), 0).unwrap();
        // x (d0 - x) vanishes at 0, so the kernel from 0 is a point mass.
        let from_zero = uniformization_kernel(&spec, 0, 1.0, 1e-10, None).unwrap();
        assert_eq!(from_zero.probs, vec![1.0]);

        let k = uniformization_kernel(&spec, 1, 1.0, 1e-10, None).unwrap();
        assert_eq!(k.probs.len(), 5);
        close(k.total_mass(), 1.0, 1e-12);
        close(k.probs.iter().sum(), 1.0, 1e-10);
        // Frozen from an independent dense matrix-exponential evaluation.
        close(k.prob(0), (-4.0f64).exp(), 1e-10);
        let frozen = [
            0.018_315_638_888_734_18,
            0.031_673_773_424_135_64,
            0.065_276_294_152_410_64,
            0.178_470_156_719_977_8,
            0.706_264_136_814_741_3,
        ];
        for (k_, f) in frozen.iter().enumerate() {
            close(k.prob(k_ as u64), *f, 1e-9);
        }
    }

    #[test]
    fn uniformization_cap_leakage_goes_to_tail() {
        let spec = ProcessSpec::new(RateFunctionSpec::linear_birth(1.0).unwrap(), 1).unwrap();
        let tight = uniformization_kernel(&spec, 1, 1.0, 1e-10, Some(3)).unwrap();
        assert!(tight.tail_bound > 0.1);
        close(tight.total_mass(), 1.0, 1e-12);
        assert!(tight.tail_moment_factor.is_infinite());
        assert!(matches!(
            uniformization_kernel(&spec, 4, 1.0, 1e-10, Some(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gamma_mixed_examples() {
        close(gamma_mixed_poisson_prob(1.0, 0, 1.0).unwrap(), 0.5, 1e-15);
        close(gamma_mixed_poisson_prob(1.0, 1, 1.0).unwrap(), 0.25, 1e-15);
        let total: f64 = (0..200).map(|k| gamma_mixed_poisson_prob(2.0, k, 0.5).unwrap()).sum();
        close(total, 1.0, 1e-12);
        // Large arguments stay finite.
        let p = gamma_mixed_poisson_prob(1.0e4, 10_000, 0.01).unwrap();
        assert!(p.is_finite() && p > 0.0);
    }

    #[test]
    fn kernel_json_layout() {
        let k = death_kernel(0.7, 2, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&k.to_json()).unwrap();
        assert_eq!(v["s"], 1);
        assert_eq!(v["tail_bound"], 0.0);
        assert_eq!(v["probs"].as_object().unwrap().len(), 2);
        assert!(v["probs"]["1"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn time_changed_kernel_small_step_matches_rates() {
        // Over a short step h, P(S(h) = s + k) = h q_{s,k} + O(h^2).
        let spec = ProcessSpec::new(RateFunctionSpec::linear_death(0.7, 6).unwrap(), 0).unwrap();
        let h = 1e-4;
        let k = time_changed_kernel(&spec, 1, h, 1e-14).unwrap();
        let rates = death_kernel(0.7, 6, 1).unwrap();
        for j in 1..=5u64 {
            close(k.prob(j) / h, rates.prob(j), 2e-4);
        }
        close(k.total_mass(), 1.0, 1e-12);
    }

    #[test]
    fn time_changed_kernel_is_poisson_mixture() {
        // Poisson base: S(t) is Poisson(alpha N(t)), mixed over N(t) ~ Poisson(t).
        let spec = ProcessSpec::new(RateFunctionSpec::poisson(0.8).unwrap(), 0).unwrap();
        let t = 0.6;
        let k = time_changed_kernel(&spec, 0, t, 1e-13).unwrap();
        let mut direct = 0.0;
        let mut w = (-t).exp();
        for j in 0..60u64 {
            if j > 0 {
                w *= t / j as f64;
            }
            direct += w * (-0.8 * j as f64).exp();
        }
        close(k.prob(0), direct, 1e-12);
    }

    #[test]
    fn time_changed_kernel_from_absorbing_state() {
        let spec = ProcessSpec::new(RateFunctionSpec::linear_death(0.7, 3).unwrap(), 0).unwrap();
        assert_eq!(time_changed_kernel(&spec, 3, 1.0, 1e-10).unwrap().probs, vec![1.0]);
    }
}
