// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use driftbranch::kernels::catalog;
use driftbranch::renewal::solve_unchecked;
use driftbranch::thresholds::compute_m_star;
use driftbranch::{run_ensemble, run_replica, Configuration, CycleKernel, InitialStateSpec, Intensity, ModelParams};

fn kernel() -> CycleKernel {
    CycleKernel::product_gamma(0, 1.0).unwrap()
}

fn replicas(c: &mut Criterion) {
    let init = Configuration::new((1..=50).map(|i| f64::from(i) / 10.0).collect()).unwrap();
    let critical = ModelParams::new(1.0, kernel(), 10.0).with_grid((1..=10).map(f64::from).collect());
    c.bench_function("replica/critical_50_particles_t10", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(run_replica(&critical, &init, seed).unwrap())
        })
    });
    let phi = ModelParams::new(1.0, catalog().into_iter().find(|(n, _)| n.starts_with("phi")).unwrap().1, 5.0);
    c.bench_function("replica/phi_envelope_t5", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(run_replica(&phi, &init, seed).unwrap())
        })
    });
    let poisson = InitialStateSpec::Poisson {
        intensity: Intensity::exponential(1.0, 1.0).unwrap(),
    };
    let sub = ModelParams::new(2.0, kernel(), 20.0).with_grid((1..=10).map(|i| f64::from(2 * i)).collect());
    c.bench_function("ensemble/1000_subcritical", |b| {
        b.iter(|| black_box(run_ensemble(&sub, &poisson, 1000, 1).unwrap()))
    });
}

fn thresholds(c: &mut Criterion) {
    let kernels = catalog();
    c.bench_function("beta_hat/catalog", |b| {
        b.iter(|| kernels.iter().map(|(_, k)| k.beta_hat(black_box(0.7))).sum::<f64>())
    });
    c.bench_function("m_star/product_general_gamma", |b| {
        let k = &kernels.iter().find(|(n, _)| n.contains("gamma(2.5")).unwrap().1;
        b.iter(|| compute_m_star(black_box(k)).unwrap())
    });
}

fn renewal(c: &mut Criterion) {
    let k = kernel();
    let i = Intensity::exponential(1.0, 1.0).unwrap();
    c.bench_function("renewal/t20_dt0.01", |b| {
        b.iter(|| black_box(solve_unchecked(&k, 1.0, &i, 20.0, 0.01).unwrap()))
    });
}

criterion_group!(benches, replicas, thresholds, renewal);
criterion_main!(benches);
