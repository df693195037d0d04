use cenn_forge::cenn::{settle_feedforward, settle_nonlinear_d, settle_ode};
use cenn_forge::templates::{self, Direction};
use cenn_forge::{BoundaryPolicy, CeNNArrayState, NonlinearD, SettleConfig, Shape, Template};
use cenn_forge_bench::random_grid;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn feedforward(c: &mut Criterion) {
    let mut g = c.benchmark_group("settle_feedforward");
    let t = templates::diff_template(Direction::N);
    for n in [8usize, 28, 64] {
        let state = CeNNArrayState::new(random_grid(Shape::new(n, n), 1));
        g.bench_with_input(BenchmarkId::from_parameter(n), &state, |b, s| {
            b.iter(|| settle_feedforward(black_box(s), &t, BoundaryPolicy::Zero).unwrap())
        });
    }
    g.finish();
}

fn ode(c: &mut Criterion) {
    let mut g = c.benchmark_group("settle_ode");
    g.sample_size(20);
    let mut a = [[0.05; 3]; 3];
    a[1][1] = 0.1;
    let t = Template::new(a, [[0.1; 3]; 3], 0.05, NonlinearD::None).unwrap();
    let cfg = SettleConfig::default();
    for n in [8usize, 28] {
        let state = CeNNArrayState::new(random_grid(Shape::new(n, n), 2));
        g.bench_with_input(BenchmarkId::from_parameter(n), &state, |b, s| {
            b.iter(|| settle_ode(black_box(s), &t, BoundaryPolicy::Zero, &cfg).unwrap())
        });
    }
    g.finish();
}

fn globmax(c: &mut Criterion) {
    let mut g = c.benchmark_group("settle_nonlinear_d");
    g.sample_size(10);
    let t = templates::globmax_template();
    let cfg = SettleConfig {
        t_max: 5.0,
        ..SettleConfig::default()
    };
    let state = CeNNArrayState::from_input_as_state(random_grid(Shape::new(28, 28), 3).map(f64::abs));
    g.bench_function("globmax_28", |b| {
        b.iter(|| settle_nonlinear_d(black_box(&state), &t, BoundaryPolicy::Zero, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, feedforward, ode, globmax);
criterion_main!(benches);
