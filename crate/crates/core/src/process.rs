//! Simple, conservative, stable Markov counting processes described by
//! their rate function `λ_X(x) = q_{x,1}`.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// A count of events (or deaths so far, for the death families).
pub type StateCount = u64;

/// Rate-function families. Every variant is a simple counting process: the
/// only transition out of `x` is to `x + 1`, at rate `rate_at(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum RateFunctionSpec {
    /// Constant rate `alpha`.
    Poisson { alpha: f64 },
    /// `beta * x`, absorbing at zero.
    LinearBirth { beta: f64 },
    /// Counting process of a linear death process: `delta * (d0 - x)` for `x < d0`.
    #[serde(rename = "linear_death")]
    LinearDeathCounting { delta: f64, d0: u64 },
    /// `x * (d0 - x)` for `x < d0`.
    #[serde(rename = "nonlinear_death")]
    NonlinearDeathCounting { d0: u64 },
    /// Per-state rates; every state at or beyond `rates.len()` is absorbing.
    #[serde(rename = "general")]
    GeneralTable { rates: Vec<f64> },
}

impl RateFunctionSpec {
    pub fn poisson(alpha: f64) -> Result<Self> {
        let spec = Self::Poisson { alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear_birth(beta: f64) -> Result<Self> {
        let spec = Self::LinearBirth { beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear_death(delta: f64, d0: u64) -> Result<Self> {
        let spec = Self::LinearDeathCounting { delta, d0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nonlinear_death(d0: u64) -> Result<Self> {
        let spec = Self::NonlinearDeathCounting { d0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn general(rates: Vec<f64>) -> Result<Self> {
        let spec = Self::GeneralTable { rates };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Poisson { alpha } => require_positive("alpha", *alpha),
            Self::LinearBirth { beta } => require_positive("beta", *beta),
            Self::LinearDeathCounting { delta, d0 } => {
                require_positive("delta", *delta)?;
                require_d0(*d0)
            }
            Self::NonlinearDeathCounting { d0 } => require_d0(*d0),
            Self::GeneralTable { rates } => {
                match rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
                    Some(i) => Err(Error::InvalidParameter(format!(
                        "general rate table entry {i} must be finite and >= 0, got {}",
                        rates[i]
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Poisson { .. } => "poisson",
            Self::LinearBirth { .. } => "linear_birth",
            Self::LinearDeathCounting { .. } => "linear_death",
            Self::NonlinearDeathCounting { .. } => "nonlinear_death",
            Self::GeneralTable { .. } => "general",
        }
    }

    /// Largest admissible state, when the family lives on a finite range.
    pub fn max_state(&self) -> Option<StateCount> {
        match self {
            Self::LinearDeathCounting { d0, .. } | Self::NonlinearDeathCounting { d0 } => Some(*d0),
            _ => None,
        }
    }

    pub fn check_state(&self, x: StateCount) -> Result<()> {
        match self.max_state() {
            Some(d0) if x > d0 => Err(Error::Domain {
                family: self.family_name(),
                state: x,
            }),
            _ => Ok(()),
        }
    }

    /// `λ_X(x)`.
    pub fn rate_at(&self, x: StateCount) -> Result<f64> {
        self.check_state(x)?;
        Ok(self.rate_unchecked(x))
    }

    pub(crate) fn rate_unchecked(&self, x: StateCount) -> f64 {
        match *self {
            Self::Poisson { alpha } => alpha,
            Self::LinearBirth { beta } => beta * x as f64,
            Self::LinearDeathCounting { delta, d0 } => {
                if x < d0 {
                    delta * (d0 - x) as f64
                } else {
                    0.0
                }
            }
            Self::NonlinearDeathCounting { d0 } => {
                if x < d0 {
                    x as f64 * (d0 - x) as f64
                } else {
                    0.0
                }
            }
            Self::GeneralTable { ref rates } => {
                usize::try_from(x).ok().and_then(|i| rates.get(i)).copied().unwrap_or(0.0)
            }
        }
    }

    pub fn is_absorbing(&self, x: StateCount) -> Result<bool> {
        Ok(self.rate_at(x)? == 0.0)
    }
}

fn require_d0(d0: u64) -> Result<()> {
    if d0 == 0 {
        Err(Error::InvalidParameter("d0 must be a positive integer".into()))
    } else {
        Ok(())
    }
}

/// A rate-function family together with its initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProcessSpec", into = "RawProcessSpec")]
pub struct ProcessSpec {
    pub rate: RateFunctionSpec,
    pub initial_state: StateCount,
}

#[derive(Serialize, Deserialize)]
struct RawProcessSpec {
    #[serde(flatten)]
    rate: RateFunctionSpec,
    initial_state: StateCount,
}

impl TryFrom<RawProcessSpec> for ProcessSpec {
    type Error = Error;

    fn try_from(raw: RawProcessSpec) -> Result<Self> {
        Self::new(raw.rate, raw.initial_state)
    }
}

impl From<ProcessSpec> for RawProcessSpec {
    fn from(spec: ProcessSpec) -> Self {
        Self {
            rate: spec.rate,
            initial_state: spec.initial_state,
        }
    }
}

impl ProcessSpec {
    pub fn new(rate: RateFunctionSpec, initial_state: StateCount) -> Result<Self> {
        rate.validate()?;
        rate.check_state(initial_state)?;
        Ok(Self {
            rate,
            initial_state,
        })
    }

    /// Same family, started from `state`.
    pub fn starting_at(&self, state: StateCount) -> Result<Self> {
        Self::new(self.rate.clone(), state)
    }

    pub fn rate_at(&self, x: StateCount) -> Result<f64> {
        self.rate.rate_at(x)
    }

    pub fn is_absorbing(&self, x: StateCount) -> Result<bool> {
        self.rate.is_absorbing(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rate: RateFunctionSpec) -> ProcessSpec {
        ProcessSpec::new(rate, 0).unwrap()
    }

    #[test]
    fn rate_examples() {
        let poisson = spec(RateFunctionSpec::poisson(1.0).unwrap());
        assert_eq!(poisson.rate_at(7).unwrap(), 1.0);

        let death = spec(RateFunctionSpec::linear_death(0.7, 10).unwrap());
        assert_eq!(death.rate_at(10).unwrap(), 0.0);

        let nonlinear = spec(RateFunctionSpec::nonlinear_death(5).unwrap());
        assert_eq!(nonlinear.rate_at(2).unwrap(), 6.0);
    }

    #[test]
    fn absorbing_examples() {
        let birth = spec(RateFunctionSpec::linear_birth(0.3).unwrap());
        assert!(birth.is_absorbing(0).unwrap());
        let poisson = spec(RateFunctionSpec::poisson(2.0).unwrap());
        assert!(!poisson.is_absorbing(0).unwrap());
        let death = spec(RateFunctionSpec::linear_death(0.7, 10).unwrap());
        assert!(!death.is_absorbing(3).unwrap());
    }

    #[test]
    fn death_families_reject_states_beyond_d0() {
        let death = RateFunctionSpec::linear_death(0.7, 10).unwrap();
        assert!(matches!(death.rate_at(11), Err(Error::Domain { .. })));
        let nonlinear = RateFunctionSpec::nonlinear_death(4).unwrap();
        assert!(nonlinear.is_absorbing(5).is_err());
        assert!(ProcessSpec::new(death, 11).is_err());
    }

    #[test]
    fn death_families_absorb_at_d0() {
        let death = RateFunctionSpec::linear_death(0.7, 6).unwrap();
        for x in 0..6 {
            assert!(!death.is_absorbing(x).unwrap());
        }
        assert!(death.is_absorbing(6).unwrap());

        // x (d0 - x) also vanishes at x = 0.
        let nonlinear = RateFunctionSpec::nonlinear_death(6).unwrap();
        assert!(nonlinear.is_absorbing(0).unwrap());
        for x in 1..6 {
            assert!(!nonlinear.is_absorbing(x).unwrap());
        }
        assert!(nonlinear.is_absorbing(6).unwrap());
    }

    #[test]
    fn general_table_absorbs_past_the_end() {
        let table = RateFunctionSpec::general(vec![1.0, 2.5, 0.5]).unwrap();
        assert_eq!(table.rate_at(1).unwrap(), 2.5);
        for x in 3..20 {
            assert!(table.is_absorbing(x).unwrap());
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(RateFunctionSpec::poisson(-1.0).is_err());
        assert!(RateFunctionSpec::poisson(f64::NAN).is_err());
        assert!(RateFunctionSpec::linear_birth(0.0).is_err());
        assert!(RateFunctionSpec::linear_death(0.7, 0).is_err());
        assert!(RateFunctionSpec::general(vec![1.0, f64::INFINITY]).is_err());
        assert!(RateFunctionSpec::general(vec![-0.1]).is_err());
    }

    #[test]
    fn json_layout() {
        let spec = ProcessSpec::new(RateFunctionSpec::linear_death(0.7, 10).unwrap(), 3).unwrap();
        let value = serde_json::to_value(&spec).unwrap();
        assert_eq!(
            value,
            serde_json::json!({
                "family": "linear_death",
                "params": {"delta": 0.7, "d0": 10},
                "initial_state": 3
            })
        );
        let back: ProcessSpec = serde_json::from_value(value).unwrap();
        assert_eq!(back, spec);

        let general: ProcessSpec = serde_json::from_str(
            r#"{"family":"general","params":{"rates":[1.0,0.5]},"initial_state":0}"#,
        )
        .unwrap();
        assert_eq!(general.rate_at(1).unwrap(), 0.5);
    }

    #[test]
    fn json_rejects_invalid_specs() {
        let bad = r#"{"family":"poisson","params":{"alpha":-1.0},"initial_state":0}"#;
        assert!(serde_json::from_str::<ProcessSpec>(bad).is_err());
        let beyond = r#"{"family":"nonlinear_death","params":{"d0":3},"initial_state":4}"#;
        assert!(serde_json::from_str::<ProcessSpec>(beyond).is_err());
    }
}
