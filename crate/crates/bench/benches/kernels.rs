use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use gasflow::fields::{jm, plane_shear, Profile};
use gasflow::reduced_ode::solve_dense;
use gasflow::verify::{functionals, pde_residual, Extras, ResidualGrid};
use gasflow::{ChartMetric, Forcing, GasSolution, InitialData, ParamSet, QuadSpec, ReducedCoefficients, SystemKind};

fn special_params() -> ParamSet {
    ParamSet { gamma: 1.4, k: 1.0, mu: 0.3, l: 0.5, ..Default::default() }
}

fn algebraic_solution() -> GasSolution {
    let data = InitialData::algebraic(4.0, 1.4, 1.0).unwrap();
    let params = ParamSet { k: data.special_k().unwrap(), mu: 0.2, ..special_params() };
    let coeffs = ReducedCoefficients::new(SystemKind::TwoDSpecial, params, vec![1.0, 0.1, 0.3]).unwrap();
    GasSolution::assemble(Arc::new(coeffs), data, 1.4, -0.5, 6.0, 1e-12).unwrap()
}

fn ode(c: &mut Criterion) {
    let p = special_params();
    c.bench_function("special system to t = 1e4", |b| {
        b.iter(|| solve_dense(SystemKind::TwoDSpecial, black_box(&[1.0, 0.1, 0.2]), &p, 1e4, 1e-10).unwrap())
    });
    let p3 = ParamSet { gamma: 1.4, k: 1.0, h0: 0.5, mu: 0.3, delta: 1, ..Default::default() };
    c.bench_function("3d system to t = 1e4", |b| {
        b.iter(|| solve_dense(SystemKind::ThreeD, black_box(&[0.2, 0.1, 1.0]), &p3, 1e4, 1e-10).unwrap())
    });
}

fn fields(c: &mut Criterion) {
    let chart = ChartMetric::euclidean(2);
    let f = plane_shear(chart.clone(), 1.0, Profile::Sin { amplitude: 0.6, frequency: 1.1, phase: 0.2 }).unwrap();
    c.bench_function("J_2 on the shear family", |b| b.iter(|| jm(&chart, &f, black_box(&[0.3, -0.7]), 2).unwrap()));
}

fn residual(c: &mut Criterion) {
    let sol = algebraic_solution();
    let grid =
        ResidualGrid { times: vec![1.0], lo: vec![-2.0; 2], hi: vec![2.0; 2], nodes_per_axis: 5, h_t: 0.1, h_x: 0.02 };
    let forcing = Forcing::Planar { mu: 0.2, l: 0.5 };
    c.bench_function("Euler residual, 25 nodes, two levels", |b| {
        b.iter(|| pde_residual(&sol, 1.4, &forcing, &grid).unwrap())
    });
}

fn quadrature(c: &mut Criterion) {
    let sol = algebraic_solution();
    let quad = QuadSpec::default();
    let mut g = c.benchmark_group("functionals");
    g.sample_size(10);
    g.bench_function("snapshot at t = 1", |b| {
        b.iter(|| functionals(&sol, 1.4, 1.0, &quad, &Extras::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, ode, fields, residual, quadrature);
criterion_main!(benches);
