use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use galerkin_core::exec::Execution;
use galerkin_core::sde::{run_ensemble, simulate_fast_only, simulate_full, Model, SimConfig};
use galerkin_core::{ModelParams, Spectrum, StateVector};

fn model() -> Model {
    let s = Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap();
    Model::torus(s, ModelParams::new(1.0, vec![0.0, -0.3, -0.5, -0.7], 0.5, 0.5).unwrap()).unwrap()
}

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn full_ensemble(c: &mut Criterion) {
    let m = model();
    let cfg = SimConfig { t_end: 2.0, burn_in: 0.0, ..Default::default() };
    let mut group = c.benchmark_group("full_ensemble_32");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_ensemble(exec, 1, 32, |_, r| simulate_full(&cfg, &m, None, r).map(|rec| rec.observables.len())).unwrap())
        });
    }
    group.finish();
}

fn fast_ensemble(c: &mut Criterion) {
    let m = model();
    let cfg = SimConfig::default();
    let x0 = StateVector::from(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.8, 0.0]);
    let mut group = c.benchmark_group("fast_ensemble_64");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                run_ensemble(exec, 2, 64, |_, r| simulate_fast_only(x0.clone(), black_box(4.0), &cfg, &m, r).map(|rec| rec.stats.steps))
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, full_ensemble, fast_ensemble);
criterion_main!(benches);
