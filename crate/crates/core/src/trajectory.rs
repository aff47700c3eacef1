//! Event-driven simulation of simple counting processes, the unit-rate
//! Poisson clock, and path-wise composition `S(t) = X(N(t))`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{ProcessSpec, RateFunctionSpec, StateCount};
use crate::rng::{exponential, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub jump: u64,
}

/// Right-continuous step path on `[0, horizon]`.
///
/// Time 0 carries the initial condition; stored event times are strictly
/// positive, strictly increasing, and no later than `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    initial_state: StateCount,
    events: Vec<Event>,
    horizon: f64,
}

#[derive(Deserialize)]
struct RawTrajectory {
    initial_state: StateCount,
    events: Vec<Event>,
    horizon: f64,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = Error;

    fn try_from(raw: RawTrajectory) -> Result<Self> {
        Trajectory::new(raw.initial_state, raw.events, raw.horizon)
    }
}

impl Trajectory {
    pub fn new(initial_state: StateCount, events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and >= 0, got {horizon}"
            )));
        }
        let mut last = 0.0;
        for (i, e) in events.iter().enumerate() {
            if !(e.time > last) || e.time > horizon {
                return Err(Error::InvalidParameter(format!(
                    "event {i} at time {} breaks ordering within (0, {horizon}]",
                    e.time
                )));
            }
            if e.jump == 0 {
                return Err(Error::InvalidParameter(format!("event {i} has a zero jump")));
            }
            last = e.time;
        }
        Ok(Self {
            initial_state,
            events,
            horizon,
        })
    }

    pub fn constant(initial_state: StateCount, horizon: f64) -> Result<Self> {
        Self::new(initial_state, Vec::new(), horizon)
    }

    pub fn initial_state(&self) -> StateCount {
        self.initial_state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn final_state(&self) -> StateCount {
        self.initial_state + self.events.iter().map(|e| e.jump).sum::<u64>()
    }

    /// Value at `t`, counting any event that happens exactly at `t`.
    pub fn evaluate(&self, t: f64) -> Result<StateCount> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::Horizon {
                requested: t,
                horizon: self.horizon,
            });
        }
        let n = self.events.partition_point(|e| e.time <= t);
        Ok(self.initial_state + self.events[..n].iter().map(|e| e.jump).sum::<u64>())
    }

    /// `time,state` rows: one at 0, one per event, one at the horizon.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,state\n");
        let mut state = self.initial_state;
        let _ = writeln!(out, "{},{}", crate::fmt_real(0.0), state);
        for e in &self.events {
            state += e.jump;
            let _ = writeln!(out, "{},{}", crate::fmt_real(e.time), state);
        }
        let _ = writeln!(out, "{},{}", crate::fmt_real(self.horizon), state);
        out
    }
}

/// Exact simulation of a simple counting process on `[0, t_end]`.
///
/// The holding time in `x` is exponential with rate `λ_X(x)`; the path stays
/// flat from the first absorbing state onward.
pub fn simulate_simple(spec: &ProcessSpec, t_end: f64, stream: RngStream) -> Result<Trajectory> {
    let mut rng = stream.rng();
    simulate_simple_with(&spec.rate, spec.initial_state, t_end, &mut rng)
}

pub(crate) fn simulate_simple_with<R: rand::Rng + ?Sized>(
    rate: &RateFunctionSpec,
    initial_state: StateCount,
    t_end: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    check_t_end(t_end)?;
    rate.check_state(initial_state)?;
    let mut events = Vec::new();
    let mut x = initial_state;
    let mut t = 0.0;
    loop {
        let lambda = rate.rate_unchecked(x);
        if lambda == 0.0 {
            break;
        }
        t += exponential(rng, lambda);
        if t > t_end {
            break;
        }
        events.push(Event { time: t, jump: 1 });
        x += 1;
    }
    Ok(Trajectory {
        initial_state,
        events,
        horizon: t_end,
    })
}

/// Unit-rate Poisson clock started at 0.
pub fn simulate_poisson_unit(t_end: f64, stream: RngStream) -> Result<Trajectory> {
    let mut rng = stream.rng();
    simulate_poisson_unit_with(t_end, &mut rng)
}

pub(crate) fn simulate_poisson_unit_with<R: rand::Rng + ?Sized>(
    t_end: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    simulate_simple_with(&RateFunctionSpec::Poisson { alpha: 1.0 }, 0, t_end, rng)
}

fn check_t_end(t_end: f64) -> Result<()> {
    if t_end.is_finite() && t_end > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "t_end must be finite and > 0, got {t_end}"
        )))
    }
}

/// Path of `S(t) = X(N(t))`.
///
/// `S` can only move at event times of `N`. At each such time the jump is the
/// increment of `X` across the clock increment, so several `X` events that fall
/// into one clock increment become one simultaneous jump, and clock events
/// across which `X` is flat are skipped.
pub fn compose(x_traj: &Trajectory, n_traj: &Trajectory) -> Result<Trajectory> {
    let needed = n_traj.final_state() as f64;
    if x_traj.horizon < needed {
        return Err(Error::Horizon {
            requested: needed,
            horizon: x_traj.horizon,
        });
    }
    let x_events = x_traj.events();
    // Number of X events with time <= the current clock value, and their total.
    let mut consumed = 0usize;
    let mut x_value = x_traj.initial_state;
    let mut advance = |clock: f64| {
        while consumed < x_events.len() && x_events[consumed].time <= clock {
            x_value += x_events[consumed].jump;
            consumed += 1;
        }
        x_value
    };

    let mut clock = n_traj.initial_state;
    let initial_state = advance(clock as f64);
    let mut previous = initial_state;
    let mut events = Vec::new();
    for e in n_traj.events() {
        clock += e.jump;
        let current = advance(clock as f64);
        if current > previous {
            events.push(Event {
                time: e.time,
                jump: current - previous,
            });
            previous = current;
        }
    }
    Ok(Trajectory {
        initial_state,
        events,
        horizon: n_traj.horizon,
    })
}

/// The three paths behind one realization of the time-changed process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeChangedPath {
    pub clock: Trajectory,
    pub base: Trajectory,
    pub composed: Trajectory,
}

/// Simulates `N` on `[0, t_end]`, then `X` over its own time `[0, N(t_end)]`,
/// then composes them.
pub fn simulate_time_changed(
    spec: &ProcessSpec,
    t_end: f64,
    stream: RngStream,
) -> Result<TimeChangedPath> {
    let mut rng = stream.rng();
    simulate_time_changed_with(&spec.rate, spec.initial_state, t_end, &mut rng)
}

pub(crate) fn simulate_time_changed_with<R: rand::Rng + ?Sized>(
    rate: &RateFunctionSpec,
    initial_state: StateCount,
    t_end: f64,
    rng: &mut R,
) -> Result<TimeChangedPath> {
    let clock = simulate_poisson_unit_with(t_end, rng)?;
    let m = clock.final_state();
    let base = if m == 0 {
        rate.check_state(initial_state)?;
        Trajectory::constant(initial_state, 0.0)?
    } else {
        simulate_simple_with(rate, initial_state, m as f64, rng)?
    };
    let composed = compose(&base, &clock)?;
    Ok(TimeChangedPath {
        clock,
        base,
        composed,
    })
}
