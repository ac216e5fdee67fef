use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use horlab_core::envelope::sup_convolution;
use horlab_core::geometry::{exp_flow, heisenberg1};
use horlab_core::metric::{GraphOracle, HeisenbergGauge};
use horlab_core::solver::{solve_dirichlet, SolverParams};
use horlab_core::{BoxDomain, Grid, GridFunction, QuasilinearOperator};

fn envelopes(c: &mut Criterion) {
    let grid = Grid::cube(3, -1.0, 1.0, 24).unwrap();
    let u = GridFunction::from_fn(grid, |x| (2.0 * x[0]).sin() + x[1] * x[2]);
    c.bench_function("sup_convolution heisenberg 24^3 eps 0.05", |b| {
        b.iter(|| sup_convolution(black_box(&u), 0.05, &HeisenbergGauge).unwrap())
    });
}

fn solver(c: &mut Criterion) {
    let sys = heisenberg1();
    let op = QuasilinearOperator::sublaplacian();
    let grid = Grid::cube(3, -1.0, 1.0, 9).unwrap();
    let params = SolverParams { tolerance: 1e-6, ..SolverParams::default() };
    let f = |x: &[f64]| x[0] * x[0] - x[1] * x[1];
    c.bench_function("solve_dirichlet heisenberg 9^3", |b| {
        b.iter(|| solve_dirichlet(&op, &sys, black_box(&grid), &f, &params).unwrap())
    });
}

fn flows(c: &mut Criterion) {
    let sys = heisenberg1();
    c.bench_function("exp_flow heisenberg 8 steps", |b| {
        b.iter(|| exp_flow(&sys, black_box(&[0.1, 0.2, 0.3]), &[0.05, -0.02], 8).unwrap())
    });
}

fn graph(c: &mut Criterion) {
    let sys = heisenberg1();
    let region = BoxDomain::cube(3, -0.5, 0.5).unwrap();
    let mut g = c.benchmark_group("graph");
    g.sample_size(10);
    g.bench_function("build heisenberg step 0.125", |b| {
        b.iter(|| GraphOracle::new(&sys, black_box(region.clone()), 0.125).unwrap())
    });
    g.finish();
}

criterion_group!(kernels, envelopes, solver, flows, graph);
criterion_main!(kernels);
