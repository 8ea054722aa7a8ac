use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use omfbm::scenarios::{example1_law, EXAMPLE1_END, EXAMPLE1_START};
use omfbm::*;

const MODES: [(&str, bool); 2] = [("sequential", false), ("parallel", true)];

fn fbm_paths(c: &mut Criterion) {
    let g = TimeGrid::new(256).unwrap();
    let s = FbmSampler::new(g, HurstModel::new(0.3).unwrap(), FbmMethod::Volterra).unwrap();
    let mut group = c.benchmark_group("fbm_volterra_1000_paths");
    for (name, on) in MODES {
        par::set_parallel(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(s.sample_paths(1, 1000, 3)))
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let g = TimeGrid::new(128).unwrap();
    let m = HurstModel::new(0.7).unwrap();
    let mut group = c.benchmark_group("example1_ensemble_2000");
    for (name, on) in MODES {
        par::set_parallel(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                black_box(
                    simulate_ensemble(
                        &DriftSpec::example1_sine(),
                        &[EXAMPLE1_START],
                        &m,
                        g,
                        2000,
                        5,
                    )
                    .unwrap(),
                )
            })
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let g = TimeGrid::new(128).unwrap();
    let m = HurstModel::new(0.3).unwrap();
    let law = example1_law(&m, g, 200, 1).unwrap();
    let phi = Path::linear(g, &[EXAMPLE1_START], &[EXAMPLE1_END]).unwrap();
    let drift = DriftSpec::example1_sine();
    let mut group = c.benchmark_group("action_gradient_n128");
    for (name, on) in MODES {
        par::set_parallel(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(action_gradient(&phi, &drift, &law, &m, 1e-6).unwrap()))
        });
    }
    group.finish();
    par::set_parallel(true);
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = fbm_paths, ensemble, gradient
}
criterion_main!(benches);
