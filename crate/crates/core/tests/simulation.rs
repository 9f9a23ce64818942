// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo properties of the simulator.

use driftbranch::rng::{replica_seed, stream};
use driftbranch::simulator::{run_replica_with_events, Replica};
use driftbranch::{
    run_ensemble, run_replica, Configuration, CycleKernel, InitialStateSpec, Intensity, ModelParams,
    ReplicaEnsemble, WeightFunction,
};

fn exp_kernel() -> CycleKernel {
    CycleKernel::product_gamma(0, 1.0).unwrap()
}

fn poisson_unit() -> InitialStateSpec {
    InitialStateSpec::Poisson {
        intensity: Intensity::exponential(1.0, 1.0).unwrap(),
    }
}

#[test]
fn drift_only_matches_the_soluble_mean() {
    let params = ModelParams::new(0.0, exp_kernel(), 2.0)
        .with_grid(vec![0.5, 1.0, 2.0])
        .without_branching();
    let ens = run_ensemble(&params, &poisson_unit(), 10_000, 77).unwrap();
    for s in &ens.summary {
        let exact = (-s.time).exp();
        assert!((s.mean_size - exact).abs() <= 3.0 * s.se_size, "t={} {} ± {}", s.time, s.mean_size, s.se_size);
        assert_eq!(s.capped, 0);
        assert_eq!(s.extinct + s.live, s.replicas);
    }
}

#[test]
fn drift_only_survivors_are_the_shifted_late_particles() {
    let init = Configuration::new(vec![0.2, 0.9, 1.7, 2.5, 4.0]).unwrap();
    let params = ModelParams::new(0.0, exp_kernel(), 3.0).without_branching();
    for t in [0.0, 0.5, 1.7, 3.0] {
        let mut replica = Replica::new(&params, &init, stream(1)).unwrap();
        replica.advance_to(t, &mut |_| {});
        let expected: Vec<f64> = init.iter().filter(|&x| x > t).map(|x| x - t).collect();
        assert_eq!(replica.configuration().traits(), &expected[..], "t={t}");
    }
}

#[test]
fn generator_of_h_matches_drift_and_death() {
    let (varsigma, alpha, m, delta) = (0.5, 3.0, 1.5, 1e-3);
    let h = WeightFunction::HVarsigmaAlpha { varsigma, alpha };
    let gamma = Configuration::new(vec![0.5, 1.0, 2.0]).unwrap();
    let params = ModelParams::new(m, exp_kernel(), delta);
    let f0 = h.evaluate(&gamma);
    let n = 1_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..n {
        let mut replica = Replica::new(&params, &gamma, stream(replica_seed(5, i))).unwrap();
        replica.advance_to(delta, &mut |_| {});
        let d = (h.evaluate(&replica.configuration()) - f0) / delta;
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / (n as f64 - 1.0)).sqrt();
    // −(DF)(γ) = α Σ e^{-αx}; death: m Σ [F(γ∖x) − F(γ)] = −m Σ (ς + e^{-αx}).
    let e: f64 = gamma.iter().map(|x| (-alpha * x).exp()).sum();
    let exact = alpha * e - m * (3.0 * varsigma + e);
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} ± {se} vs {exact}");
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let params = ModelParams::new(0.6, CycleKernel::product_gamma(1, 1.0).unwrap(), 6.0)
        .with_grid(vec![2.0, 4.0, 6.0])
        .with_weights(vec![WeightFunction::PowerMoment { l: 2 }]);
    let init = Configuration::new(vec![0.3, 0.4, 2.0]).unwrap();
    for seed in [0, 1, u64::MAX] {
        assert_eq!(run_replica(&params, &init, seed).unwrap(), run_replica(&params, &init, seed).unwrap());
    }
    let a = run_ensemble(&params, &poisson_unit(), 200, 9).unwrap();
    let b = run_ensemble(&params, &poisson_unit(), 200, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn single_replica_ensemble_reduces_to_run_replica() {
    let params = ModelParams::new(0.4, exp_kernel(), 5.0).with_grid(vec![1.0, 5.0]);
    let init = Configuration::new(vec![0.1, 0.7]).unwrap();
    let ens = run_ensemble(&params, &InitialStateSpec::Fixed { traits: init.clone() }, 1, 31).unwrap();
    let direct = run_replica(&params, &init, replica_seed(31, 0)).unwrap();
    assert_eq!(ens.trajectories[0], direct);
}

#[test]
fn summary_is_recomputable_from_trajectories() {
    let params = ModelParams::new(1.0, exp_kernel(), 10.0)
        .with_grid((1..=10).map(f64::from).collect())
        .with_weights(vec![WeightFunction::h_varsigma_alpha(0.5, 3.0).unwrap()]);
    let ens = run_ensemble(&params, &poisson_unit(), 500, 3).unwrap();
    let again = ReplicaEnsemble::from_trajectories(ens.base_seed, &params.record_grid, 1, ens.trajectories.clone());
    assert_eq!(again, ens);
}

#[test]
fn extinction_is_absorbing() {
    let params = ModelParams::new(2.0, exp_kernel(), 20.0).with_grid((1..=20).map(f64::from).collect());
    let ens = run_ensemble(&params, &poisson_unit(), 2_000, 4).unwrap();
    let mut extinct = 0;
    for t in &ens.trajectories {
        if let Some(at) = t.extinct_at {
            extinct += 1;
            assert!(t.samples.iter().filter(|s| s.time >= at).all(|s| s.size == 0));
        }
    }
    assert!(extinct > 1_900);
}

#[test]
fn no_events_after_extinction() {
    let params = ModelParams::new(3.0, exp_kernel(), 30.0);
    let init = Configuration::new(vec![0.5, 0.6, 0.7]).unwrap();
    for seed in 0..50 {
        let mut last_size = usize::MAX;
        let mut after_zero = 0;
        run_replica_with_events(&params, &init, seed, &mut |e| {
            if last_size == 0 {
                after_zero += 1;
            }
            last_size = e.size;
        })
        .unwrap();
        assert_eq!(after_zero, 0);
    }
}

#[test]
fn subcritical_mean_stays_below_the_initial_mean() {
    // m = 2 m* for the unit exponential kernel.
    let params = ModelParams::new(2.0, exp_kernel(), 20.0).with_grid((1..=10).map(|i| f64::from(i) * 2.0).collect());
    let ens = run_ensemble(&params, &poisson_unit(), 10_000, 12).unwrap();
    for s in &ens.summary {
        assert!(s.mean_size <= 1.0 + 3.0 * s.se_size.max(1e-4), "t={} {}", s.time, s.mean_size);
    }
    assert!(ens.summary.windows(2).all(|w| w[1].mean_size <= w[0].mean_size + 3.0 * w[0].se_size));
}

#[test]
fn supercritical_growth_hits_the_cap() {
    let params = ModelParams::new(0.0, exp_kernel(), 30.0).with_cap(10_000).with_grid(vec![10.0, 20.0, 30.0]);
    let ens = run_ensemble(&params, &InitialStateSpec::Fixed { traits: Configuration::new(vec![0.0]).unwrap() }, 20, 1).unwrap();
    assert!(ens.capped_count() > 0);
    let last = ens.summary.last().unwrap();
    assert_eq!(last.capped + last.extinct + last.live, last.replicas);
}
