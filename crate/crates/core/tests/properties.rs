use proptest::prelude::*;
use subordinate::kernel::{death_kernel, kernel_for, poisson_kernel, time_changed_kernel};
use subordinate::trajectory::simulate_time_changed;
use subordinate::{compose, simulate_poisson_unit, simulate_simple, ProcessSpec, RateFunctionSpec, RngStream};

fn rate_spec() -> impl Strategy<Value = (RateFunctionSpec, u64)> {
    prop_oneof![
        (0.05f64..5.0).prop_map(|a| (RateFunctionSpec::poisson(a).unwrap(), 0)),
        (0.05f64..1.5, 1u64..5).prop_map(|(b, s)| (RateFunctionSpec::linear_birth(b).unwrap(), s)),
        (0.05f64..3.0, 1u64..15).prop_map(|(d, d0)| (RateFunctionSpec::linear_death(d, d0).unwrap(), 0)),
        (2u64..12).prop_map(|d0| (RateFunctionSpec::nonlinear_death(d0).unwrap(), 1)),
        proptest::collection::vec(0.0f64..4.0, 1..8).prop_map(|r| (RateFunctionSpec::general(r).unwrap(), 0)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn composition_identity((rate, s0) in rate_spec(), seed in any::<u64>(), t_end in 0.1f64..6.0, u in 0.0f64..=1.0) {
        let spec = ProcessSpec::new(rate, s0).unwrap();
        let path = simulate_time_changed(&spec, t_end, RngStream::new(seed, 0)).unwrap();
        let t = u * t_end;
        let n_t = path.clock.evaluate(t).unwrap();
        prop_assert_eq!(path.composed.evaluate(t).unwrap(), path.base.evaluate(n_t as f64).unwrap());
        prop_assert_eq!(&compose(&path.base, &path.clock).unwrap(), &path.composed);
    }

    #[test]
    fn composed_events_lie_on_clock_and_increase((rate, s0) in rate_spec(), seed in any::<u64>(), t_end in 0.1f64..6.0) {
        let spec = ProcessSpec::new(rate, s0).unwrap();
        let path = simulate_time_changed(&spec, t_end, RngStream::new(seed, 1)).unwrap();
        let clock: Vec<f64> = path.clock.events().iter().map(|e| e.time).collect();
        let mut last = 0.0;
        for e in path.composed.events() {
            prop_assert!(e.jump >= 1);
            prop_assert!(e.time > last);
            prop_assert!(clock.contains(&e.time));
            last = e.time;
        }
        prop_assert!(path.composed.final_state() <= path.base.final_state());
    }

    #[test]
    fn simulation_is_deterministic((rate, s0) in rate_spec(), seed in any::<u64>(), stream in 0u64..1000) {
        let spec = ProcessSpec::new(rate, s0).unwrap();
        let a = simulate_simple(&spec, 3.0, RngStream::new(seed, stream)).unwrap();
        let b = simulate_simple(&spec, 3.0, RngStream::new(seed, stream)).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
        prop_assert!(a.events().iter().all(|e| e.jump == 1));
        let n = simulate_poisson_unit(2.0, RngStream::new(seed, stream)).unwrap();
        prop_assert_eq!(n, simulate_poisson_unit(2.0, RngStream::new(seed, stream)).unwrap());
    }

    #[test]
    fn kernels_are_normalized((rate, s0) in rate_spec(), ds in 0u64..3) {
        let spec = ProcessSpec::new(rate, s0).unwrap();
        let s = s0 + ds;
        prop_assume!(spec.rate.check_state(s).is_ok());
        let k = kernel_for(&spec, s, 1e-12).unwrap();
        prop_assert!(k.probs.iter().all(|p| *p >= 0.0));
        prop_assert!((k.probs.iter().sum::<f64>() + k.tail_bound - 1.0).abs() < 1e-9);
        prop_assert!(k.tail_bound <= 1e-9);
    }

    #[test]
    fn poisson_kernel_state_free(alpha in 0.05f64..8.0, s in 0u64..50) {
        let a = poisson_kernel(alpha, 0, 1e-12).unwrap();
        let b = poisson_kernel(alpha, s, 1e-12).unwrap();
        prop_assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn death_kernel_support_bounded(delta in 0.05f64..4.0, d0 in 1u64..30, frac in 0.0f64..=1.0) {
        let s = ((d0 as f64) * frac).floor() as u64;
        let k = death_kernel(delta, d0, s).unwrap();
        prop_assert_eq!(k.probs.len() as u64, d0 - s + 1);
        prop_assert_eq!(k.tail_bound, 0.0);
    }
}

#[test]
fn time_changed_kernel_needs_positive_time() {
    let spec = ProcessSpec::new(RateFunctionSpec::poisson(1.0).unwrap(), 0).unwrap();
    assert!(time_changed_kernel(&spec, 0, 0.0, 1e-12).is_err());
}

#[test]
fn time_changed_poisson_kernel_mean() {
    // E[S(t)] = E[N(t)] E[X(1)] = α t for a Poisson base.
    let spec = ProcessSpec::new(RateFunctionSpec::poisson(1.5).unwrap(), 0).unwrap();
    let k = time_changed_kernel(&spec, 0, 2.0, 1e-13).unwrap();
    let mean: f64 = k.probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
    assert!((mean - 3.0).abs() < 1e-9, "{mean}");
}
