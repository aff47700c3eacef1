//! Monte Carlo checks of the time-changed rates against composed paths.
//!
//! Replicate `i` always draws from `RngStream::new(seed, i)`, and results are
//! collected in replicate order before any floating-point reduction, so a
//! report depends only on its inputs and not on the worker count.
//!
//! Tolerance policy: an entry passes when
//! `|estimate - reference| <= 3.5 SE + bias allowance`. Finite-window
//! estimators (`h > 0`) carry a bias allowance of `2 h λ · |reference|`,
//! `λ` being the rate function of the simulated process at the start state;
//! the allowance is zero otherwise.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{require_positive, Error, Result};
use crate::kernel::kernel_for;
use crate::moments::closed_or_numeric_moments;
use crate::process::{ProcessSpec, RateFunctionSpec, StateCount};
use crate::rates::{rate_function_s, rates_from_kernel, TransitionRateRow};
use crate::rng::{exponential, RngStream};
use crate::trajectory::{compose, simulate_simple_with, simulate_time_changed_with, Event, Trajectory};

/// Multiplier on the standard error in the pass rule.
pub const SE_MULTIPLIER: f64 = 3.5;

/// Asymptotic Kolmogorov critical value at level 0.001, divided by `sqrt(n)`.
pub const KS_CRITICAL_001: f64 = 1.949;

const REFERENCE_EPS: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub check: String,
    pub estimate: Option<f64>,
    pub reference: Option<f64>,
    pub se: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl EstimateEntry {
    /// Entry judged by `|estimate - reference| <= tolerance`.
    pub fn compare(check: impl Into<String>, estimate: f64, reference: f64, se: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            estimate: Some(estimate),
            reference: Some(reference),
            se: Some(se),
            tolerance,
            pass: (estimate - reference).abs() <= tolerance,
        }
    }

    fn absent(check: impl Into<String>, pass: bool) -> Self {
        Self {
            check: check.into(),
            estimate: None,
            reference: None,
            se: None,
            tolerance: 0.0,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub target: String,
    pub master_seed: u64,
    pub n_reps: u64,
    pub entries: Vec<EstimateEntry>,
    pub notes: String,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, check: &str) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    /// One `{"check", "estimate", "reference", "se", "tolerance", "pass"}`
    /// object per line; checks are prefixed with the report target.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let line = serde_json::json!({
                "check": format!("{}/{}", self.target, e.check),
                "estimate": e.estimate,
                "reference": e.reference,
                "se": e.se,
                "tolerance": e.tolerance,
                "pass": e.pass,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

fn require_reps(n_reps: u64) -> Result<()> {
    if n_reps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 replicates, got {n_reps}")));
    }
    Ok(())
}

/// Runs `f` once per replicate on its own stream; results in replicate order.
pub fn replicate<T, F>(n_reps: u64, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n_reps)
        .into_par_iter()
        .map(|i| f(&mut RngStream::new(seed, i).rng()))
        .collect()
}

fn reference_row(spec: &ProcessSpec, s: StateCount) -> Result<TransitionRateRow> {
    Ok(rates_from_kernel(&kernel_for(spec, s, REFERENCE_EPS)?))
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Variance-to-mean ratio of counts (unbiased variance) with a delta-method
/// standard error. `None` when the mean is zero.
pub fn dispersion_with_se(values: &[u64]) -> Option<(f64, f64)> {
    let n = values.len() as f64;
    if n < 2.0 {
        return None;
    }
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    if !(mean > 0.0) {
        return None;
    }
    let m2 = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ratio = var / mean;
    let plain_var = m2 - mean * mean;
    // Influence of one observation on (m2 - m^2) / m.
    let influence = |y: f64| ((y * y - m2) - 2.0 * mean * (y - mean)) / mean - plain_var * (y - mean) / (mean * mean);
    let iv = values.iter().map(|&v| influence(v as f64).powi(2)).sum::<f64>() / (n - 1.0);
    Some((ratio, (iv / n).sqrt()))
}

/// Transition rates of `S` from `s` estimated over a short window `h`.
///
/// `p̂_k / h` estimates `q_{s,k}` with `O(h)` bias; entries cover every
/// observed jump total and every `k` whose expected count is at least 5.
/// The standard error is binomial, using `max(p̂_k, h q_{s,k})`.
pub fn estimate_transition_rates(
    spec: &ProcessSpec,
    s: StateCount,
    h: f64,
    n_reps: u64,
    seed: u64,
) -> Result<EstimateReport> {
    require_positive("h", h)?;
    require_reps(n_reps)?;
    let row = reference_row(spec, s)?;
    let rate = spec.rate.clone();
    let increments = replicate(n_reps, seed, |rng| {
        let path = simulate_time_changed_with(&rate, s, h, rng)?;
        Ok(path.composed.evaluate(h)? - s)
    })?;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for inc in increments.iter().filter(|&&k| k > 0) {
        *counts.entry(*inc).or_default() += 1;
    }
    let n = n_reps as f64;
    let lambda_s = row.rate_function;
    let mut ks: Vec<u64> = counts.keys().copied().collect();
    ks.extend(row.rates.iter().filter(|(_, &q)| q * h * n >= 5.0).map(|(&k, _)| k));
    ks.sort_unstable();
    ks.dedup();

    let mut entries = Vec::new();
    let jumped: u64 = counts.values().sum();
    let p_any = jumped as f64 / n;
    let se_any = (p_any.max(h * lambda_s) * (1.0 - p_any) / n).sqrt() / h;
    entries.push(EstimateEntry::compare(
        "rate_function",
        p_any / h,
        lambda_s,
        se_any,
        SE_MULTIPLIER * se_any + 2.0 * h * lambda_s * lambda_s,
    ));
    for k in ks {
        let q = row.rate(k);
        let p = counts.get(&k).copied().unwrap_or(0) as f64 / n;
        let se = (p.max(h * q) * (1.0 - p) / n).sqrt() / h;
        entries.push(EstimateEntry::compare(
            format!("q[{s},{k}]"),
            p / h,
            q,
            se,
            SE_MULTIPLIER * se + 2.0 * h * lambda_s * q,
        ));
    }
    Ok(EstimateReport {
        target: "transition_rates".into(),
        master_seed: seed,
        n_reps,
        entries,
        notes: format!(
            "finite-window estimator p_k/h at h = {h}; bias is O(h), allowance 2 h lambda_S q"
        ),
    })
}

/// First event of `S` started at `s`, read off composed paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstEvent {
    /// Time of the first jump of `S`.
    pub holding: f64,
    /// Number of clock events up to and including that jump.
    pub clock_events: u64,
    /// Size of the jump.
    pub jump: u64,
}

/// Simulates `N` and `X` just far enough to contain the first jump of
/// `S = X(N)`, then composes the two paths and reads the jump off the result.
pub fn sample_first_event<R: Rng + ?Sized>(
    rate: &RateFunctionSpec,
    s: StateCount,
    rng: &mut R,
) -> Result<FirstEvent> {
    if rate.rate_at(s)? == 0.0 {
        return Err(Error::DomainMsg(format!("state {s} is absorbing; S never jumps")));
    }
    let mut clock_events = Vec::new();
    let mut x_events = Vec::new();
    let mut x = s;
    let mut next_x = exponential(rng, rate.rate_unchecked(x));
    let mut t = 0.0;
    let mut n = 0u64;
    loop {
        t += exponential(rng, 1.0);
        n += 1;
        clock_events.push(Event { time: t, jump: 1 });
        while next_x <= n as f64 {
            x_events.push(Event { time: next_x, jump: 1 });
            x += 1;
            let lambda = rate.rate_unchecked(x);
            next_x = if lambda == 0.0 { f64::INFINITY } else { next_x + exponential(rng, lambda) };
        }
        if x > s {
            break;
        }
    }
    let clock = Trajectory::new(0, clock_events, t)?;
    let base = Trajectory::new(s, x_events, n as f64)?;
    let composed = compose(&base, &clock)?;
    let first = composed.events()[0];
    Ok(FirstEvent {
        holding: first.time,
        clock_events: n,
        jump: first.jump,
    })
}

fn first_events(spec: &ProcessSpec, s: StateCount, n_reps: u64, seed: u64) -> Result<Vec<FirstEvent>> {
    require_reps(n_reps)?;
    let rate = spec.rate.clone();
    replicate(n_reps, seed, |rng| sample_first_event(&rate, s, rng))
}

fn jump_probability(spec: &ProcessSpec, s: StateCount) -> Result<f64> {
    let pi = rate_function_s(spec, s)?;
    if pi == 0.0 {
        return Err(Error::DomainMsg(format!("state {s} is absorbing; S never jumps")));
    }
    Ok(pi)
}

fn geometric_entries(sample: &[FirstEvent], pi: f64) -> Vec<EstimateEntry> {
    let n = sample.len() as f64;
    let (mean_g, se_g) = mean_and_se(sample.iter().map(|e| e.clock_events as f64));
    // Geometric(pi) on {1, 2, ...}: mean 1/pi, variance (1 - pi)/pi^2.
    let se_g_ref = ((1.0 - pi) / (pi * pi) / n).sqrt();
    let se = se_g.max(se_g_ref);
    let p1 = sample.iter().filter(|e| e.clock_events == 1).count() as f64 / n;
    let se1 = (pi * (1.0 - pi) / n).sqrt();
    vec![
        EstimateEntry::compare("clock_events_mean", mean_g, 1.0 / pi, se, SE_MULTIPLIER * se),
        EstimateEntry::compare("clock_events_p1", p1, pi, se1, SE_MULTIPLIER * se1),
    ]
}

fn interevent_entries(sample: &[FirstEvent], pi: f64) -> Vec<EstimateEntry> {
    let n = sample.len();
    let (mean, se) = mean_and_se(sample.iter().map(|e| e.holding));
    let mut times: Vec<f64> = sample.iter().map(|e| e.holding).collect();
    times.sort_by(f64::total_cmp);
    let ks = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cdf = -(-pi * t).exp_m1();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            (cdf - lo).abs().max((hi - cdf).abs())
        })
        .fold(0.0, f64::max);
    let min = times[0];
    vec![
        EstimateEntry::compare("holding_mean", mean, 1.0 / pi, se, SE_MULTIPLIER * se),
        EstimateEntry {
            check: "holding_ks".into(),
            estimate: Some(ks),
            reference: Some(0.0),
            se: None,
            tolerance: KS_CRITICAL_001 / (n as f64).sqrt(),
            pass: ks <= KS_CRITICAL_001 / (n as f64).sqrt(),
        },
        EstimateEntry {
            check: "holding_min_positive".into(),
            estimate: Some(min),
            reference: None,
            se: None,
            tolerance: 0.0,
            pass: min > 0.0,
        },
    ]
}

/// First holding time of `S` from `s` against `Exponential(1 - e^{-λ_X(s)})`:
/// mean, Kolmogorov distance, and the geometric count of clock events on the
/// same replicates.
pub fn estimate_interevent(spec: &ProcessSpec, s: StateCount, n_reps: u64, seed: u64) -> Result<EstimateReport> {
    let pi = jump_probability(spec, s)?;
    let sample = first_events(spec, s, n_reps, seed)?;
    let mut entries = interevent_entries(&sample, pi);
    entries.extend(geometric_entries(&sample, pi));
    Ok(EstimateReport {
        target: "interevent".into(),
        master_seed: seed,
        n_reps,
        entries,
        notes: format!("pi(s) = {pi}; KS critical value {KS_CRITICAL_001}/sqrt(n)"),
    })
}

fn jump_entries(sample: &[FirstEvent], row: &TransitionRateRow) -> Vec<EstimateEntry> {
    let n = sample.len() as f64;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for e in sample {
        *counts.entry(e.jump).or_default() += 1;
    }
    let total: f64 = row.rates.values().sum();
    let mut ks: Vec<u64> = counts.keys().copied().collect();
    ks.extend(row.rates.iter().filter(|(_, &q)| q / total * n >= 5.0).map(|(&k, _)| k));
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let reference = row.rate(k) / total;
            let p = counts.get(&k).copied().unwrap_or(0) as f64 / n;
            let se = (reference * (1.0 - reference) / n).sqrt();
            EstimateEntry::compare(format!("jump[{k}]"), p, reference, se, SE_MULTIPLIER * se)
        })
        .collect()
}

/// First jump size of `S` from `s` against `q_{s,k} / λ_S(s)`, with the
/// geometric clock-event count on the same replicates.
pub fn estimate_jump_sizes(spec: &ProcessSpec, s: StateCount, n_reps: u64, seed: u64) -> Result<EstimateReport> {
    let pi = jump_probability(spec, s)?;
    let row = reference_row(spec, s)?;
    let sample = first_events(spec, s, n_reps, seed)?;
    let mut entries = jump_entries(&sample, &row);
    entries.extend(geometric_entries(&sample, pi));
    Ok(EstimateReport {
        target: "jump_sizes".into(),
        master_seed: seed,
        n_reps,
        entries,
        notes: "first jump size against the normalized transition rates".into(),
    })
}

/// Empirical variance-to-mean ratio of `S(h) - S(0)` (or of `X(h) - X(0)`
/// for the un-subordinated control) against the infinitesimal dispersion.
pub fn estimate_dispersion(
    spec: &ProcessSpec,
    s: StateCount,
    h: f64,
    n_reps: u64,
    seed: u64,
    time_changed: bool,
) -> Result<EstimateReport> {
    require_positive("h", h)?;
    require_reps(n_reps)?;
    let rate = spec.rate.clone();
    let increments = replicate(n_reps, seed, |rng| {
        if time_changed {
            let path = simulate_time_changed_with(&rate, s, h, rng)?;
            Ok(path.composed.evaluate(h)? - s)
        } else {
            Ok(simulate_simple_with(&rate, s, h, rng)?.final_state() - s)
        }
    })?;
    let (reference, process_rate) = if time_changed {
        (closed_or_numeric_moments(spec, s)?.dispersion, rate_function_s(spec, s)?)
    } else {
        let lambda = spec.rate_at(s)?;
        ((lambda > 0.0).then_some(1.0), lambda)
    };
    let entry = match (dispersion_with_se(&increments), reference) {
        (Some((d, se)), Some(r)) => EstimateEntry::compare(
            "dispersion",
            d,
            r,
            se,
            SE_MULTIPLIER * se + 2.0 * h * process_rate * r,
        ),
        (None, None) => EstimateEntry::absent("dispersion", true),
        (Some((d, se)), None) => EstimateEntry {
            check: "dispersion".into(),
            estimate: Some(d),
            reference: None,
            se: Some(se),
            tolerance: 0.0,
            pass: false,
        },
        (None, Some(r)) => EstimateEntry {
            check: "dispersion".into(),
            estimate: None,
            reference: Some(r),
            se: None,
            tolerance: 0.0,
            pass: false,
        },
    };
    Ok(EstimateReport {
        target: if time_changed { "dispersion" } else { "dispersion_control" }.into(),
        master_seed: seed,
        n_reps,
        entries: vec![entry],
        notes: format!("variance-to-mean ratio over h = {h}; delta-method SE"),
    })
}
