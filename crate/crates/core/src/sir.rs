//! Stochastic SIR system assembled from counting-process blocks.
//!
//! Time advances in steps of `Δ`. Each flow's per-capita rate is frozen at
//! the start of the step (`contact · I / population` for infection,
//! `recovery` for recovery) and the number of transitions on the flow is
//! drawn from a block kernel over `Δ`:
//!
//! * simple flow: `Binomial(source, 1 - e^{-rate Δ})`, the Euler-binomial
//!   scheme;
//! * over-dispersed flow: the binomial-Poisson block, i.e. the linear death
//!   counting process of the source compartment time-changed by a unit-rate
//!   Poisson clock. Its law over `Δ` is the rate-1 uniformization mixture
//!   `Σ_j Poisson(j; Δ) · Binomial(source, 1 - e^{-rate j})`, sampled exactly
//!   by drawing the clock count `j` and then the binomial.
//!
//! Every flow owns an independent clock. The infection flow is drawn first
//! from `S`, the recovery flow from the infectious count at the start of the
//! step, so no compartment can go negative.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{dispersion_with_se, replicate, EstimateEntry, EstimateReport};
use crate::fmt_real;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SirCounts {
    pub susceptible: u64,
    pub infectious: u64,
    pub recovered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SirState {
    pub susceptible: u64,
    pub infectious: u64,
    pub recovered: u64,
    /// Cumulative infections.
    pub n_si: u64,
    /// Cumulative recoveries.
    pub n_ir: u64,
}

impl SirState {
    pub fn total(&self) -> u64 {
        self.susceptible + self.infectious + self.recovered
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    pub population: u64,
    pub contact_rate: f64,
    pub recovery_rate: f64,
    #[serde(default)]
    pub overdispersed_si: bool,
    #[serde(default)]
    pub overdispersed_ir: bool,
    pub step: f64,
    pub initial: SirCounts,
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("population must be positive".into()));
        }
        for (name, v) in [("contact_rate", self.contact_rate), ("recovery_rate", self.recovery_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!("step must be finite and > 0, got {}", self.step)));
        }
        let init = self.initial;
        if init.susceptible + init.infectious + init.recovered != self.population {
            return Err(Error::Config(format!(
                "initial counts sum to {}, population is {}",
                init.susceptible + init.infectious + init.recovered,
                self.population
            )));
        }
        Ok(())
    }

    fn initial_state(&self) -> SirState {
        SirState {
            susceptible: self.initial.susceptible,
            infectious: self.initial.infectious,
            recovered: self.initial.recovered,
            n_si: 0,
            n_ir: 0,
        }
    }

    fn steps_until(&self, t_end: f64) -> Result<u64> {
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!("t_end must be finite and >= 0, got {t_end}")));
        }
        Ok((t_end / self.step - 1e-9).ceil().max(0.0) as u64)
    }

    /// Per-capita infection and recovery rates in `state`.
    pub fn per_capita_rates(&self, state: &SirState) -> (f64, f64) {
        (
            self.contact_rate * state.infectious as f64 / self.population as f64,
            self.recovery_rate,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SirRecord {
    pub t: f64,
    pub state: SirState,
}

/// Number of transitions out of a compartment of size `source` over `dt`.
pub fn draw_flow<R: Rng + ?Sized>(rng: &mut R, source: u64, per_capita: f64, dt: f64, overdispersed: bool) -> u64 {
    if source == 0 || per_capita == 0.0 {
        return 0;
    }
    let exposure = if overdispersed {
        let clock = Poisson::new(dt).expect("positive clock mean").sample(rng);
        if clock == 0.0 {
            return 0;
        }
        clock
    } else {
        dt
    };
    let p = -(-per_capita * exposure).exp_m1();
    Binomial::new(source, p).expect("probability in [0, 1]").sample(rng)
}

fn step<R: Rng + ?Sized>(config: &SirConfig, state: &mut SirState, rng: &mut R) {
    let (infection, recovery) = config.per_capita_rates(state);
    let new_infections = draw_flow(rng, state.susceptible, infection, config.step, config.overdispersed_si);
    let new_recoveries = draw_flow(rng, state.infectious, recovery, config.step, config.overdispersed_ir);
    state.susceptible -= new_infections;
    state.infectious = state.infectious + new_infections - new_recoveries;
    state.recovered += new_recoveries;
    state.n_si += new_infections;
    state.n_ir += new_recoveries;
}

fn run<R: Rng + ?Sized>(
    config: &SirConfig,
    t_end: f64,
    rng: &mut R,
    mut observe: impl FnMut(f64, &SirState),
) -> Result<SirState> {
    config.validate()?;
    let steps = config.steps_until(t_end)?;
    let mut state = config.initial_state();
    observe(0.0, &state);
    for i in 1..=steps {
        step(config, &mut state, rng);
        observe(i as f64 * config.step, &state);
    }
    Ok(state)
}

/// One realization, recorded at every step from 0 to `t_end`.
pub fn simulate_sir(config: &SirConfig, t_end: f64, seed: u64) -> Result<Vec<SirRecord>> {
    let mut rng = RngStream::new(seed, 0).rng();
    let mut records = Vec::new();
    run(config, t_end, &mut rng, |t, s| records.push(SirRecord { t, state: *s }))?;
    Ok(records)
}

/// State at `t_end` of the realization on `stream`.
pub fn simulate_sir_final(config: &SirConfig, t_end: f64, stream: RngStream) -> Result<SirState> {
    run(config, t_end, &mut stream.rng(), |_, _| {})
}

/// `t,S,I,R,N_SI,N_IR` rows.
pub fn sir_csv(records: &[SirRecord]) -> String {
    let mut out = String::from("t,S,I,R,N_SI,N_IR\n");
    for r in records {
        let s = r.state;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_real(r.t),
            s.susceptible,
            s.infectious,
            s.recovered,
            s.n_si,
            s.n_ir
        );
    }
    out
}

/// Variance-to-mean ratio of each flow's increment over `[0, window]`.
///
/// Over-dispersed flows pass when the ratio exceeds 1 by more than 3 SE;
/// their reference is the infinitesimal binomial-Poisson dispersion
/// `1 + (d0 - 1)(1 - e^{-rate})` at the initial source size `d0`. Simple
/// flows pass when the ratio is within `3 SE + 2 · rate · window` of 1 (a
/// binomial increment has ratio `e^{-rate · window}`). Flows that never move
/// are reported absent.
pub fn sir_dispersion_probe(config: &SirConfig, window: f64, n_reps: u64, seed: u64) -> Result<EstimateReport> {
    config.validate()?;
    if n_reps < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicates".into()));
    }
    let finals = replicate(n_reps, seed, |rng| run(config, window, rng, |_, _| {}))?;
    let init = config.initial_state();
    let (infection, recovery) = config.per_capita_rates(&init);
    let flows = [
        ("si", finals.iter().map(|s| s.n_si).collect::<Vec<_>>(), config.overdispersed_si, init.susceptible, infection),
        ("ir", finals.iter().map(|s| s.n_ir).collect::<Vec<_>>(), config.overdispersed_ir, init.infectious, recovery),
    ];
    let mut entries = Vec::new();
    for (name, increments, overdispersed, source, rate) in flows {
        let check = format!("{name}_dispersion");
        let Some((ratio, se)) = dispersion_with_se(&increments) else {
            entries.push(EstimateEntry {
                check,
                estimate: None,
                reference: None,
                se: None,
                tolerance: 0.0,
                pass: true,
            });
            continue;
        };
        let entry = if overdispersed {
            let reference = 1.0 + source.saturating_sub(1) as f64 * -(-rate).exp_m1();
            EstimateEntry {
                check,
                estimate: Some(ratio),
                reference: Some(reference),
                se: Some(se),
                tolerance: 3.0 * se,
                pass: ratio - 1.0 > 3.0 * se,
            }
        } else {
            EstimateEntry::compare(check, ratio, 1.0, se, 3.0 * se + 2.0 * rate * window)
        };
        entries.push(entry);
    }
    Ok(EstimateReport {
        target: "sir_dispersion".into(),
        master_seed: seed,
        n_reps,
        entries,
        notes: format!("flow increments over [0, {window}]"),
    })
}
