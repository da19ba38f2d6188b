use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use stefan_bench::{reference_data, reference_gains, zinc};
use stefan_core::model::{Order, SimState};
use stefan_core::solver::{self, ControlMode, SolverConfig};

fn bench_step(c: &mut Criterion) {
    let params = zinc();
    let mut group = c.benchmark_group("step");
    for nx in [64usize, 128, 256] {
        let cfg = SolverConfig::new(nx, 0.25, 1.0);
        let state = SimState::init(&reference_data(), &params, nx, Order::Second);
        group.bench_with_input(BenchmarkId::from_parameter(nx), &nx, |b, _| {
            b.iter(|| {
                solver::step(black_box(&state), 1e5, &params, &cfg, Order::Second).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_closed_loop(c: &mut Criterion) {
    let params = zinc();
    let gains = reference_gains();
    let mut group = c.benchmark_group("closed_loop_120s");
    group.sample_size(20);
    for nx in [64usize, 128] {
        let cfg = SolverConfig::new(nx, 0.25, 120.0);
        group.bench_with_input(BenchmarkId::from_parameter(nx), &nx, |b, _| {
            b.iter(|| {
                solver::simulate(
                    black_box(&reference_data()),
                    &params,
                    Some(&gains),
                    &cfg,
                    Order::Second,
                    &ControlMode::ClosedLoop,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_step, bench_closed_loop);
criterion_main!(benches);
