use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nsfmc::scalar::Dual;
use nsfmc::scheme::{advance_step, time_step, NewtonSolver, StepSystem, Workspace};
use nsfmc::stats::{mean_and_deviation, norm, NormSpec};
use nsfmc::SolverConfig;
use nsfmc_bench::{rough_field, vortex};

fn residual(c: &mut Criterion) {
    let mut group = c.benchmark_group("residual");
    for n in [32, 64] {
        let (grid, state, params) = vortex(n);
        let dt = time_step(&grid, &params);
        let sys = StepSystem::new(&grid, &params, &state, dt);
        let x = state.pack();
        let mut out = vec![0.0; x.len()];
        let mut ws = Workspace::new(&grid);
        group.bench_with_input(BenchmarkId::new("f64", n), &n, |b, _| {
            b.iter(|| sys.residual(black_box(&x), &mut out, &mut ws))
        });
        let xd: Vec<Dual> = x.iter().enumerate().map(|(i, &v)| Dual::new(v, (i % 3) as f64)).collect();
        let mut outd = vec![Dual::new(0.0, 0.0); x.len()];
        let mut wsd = Workspace::new(&grid);
        group.bench_with_input(BenchmarkId::new("dual", n), &n, |b, _| {
            b.iter(|| sys.residual(black_box(&xd), &mut outd, &mut wsd))
        });
    }
    group.finish();
}

fn jacobian_action(c: &mut Criterion) {
    let (grid, state, params) = vortex(64);
    let dt = time_step(&grid, &params);
    let sys = StepSystem::new(&grid, &params, &state, dt);
    let cfg = SolverConfig::default();
    let mut solver = NewtonSolver::new(&sys, &cfg);
    let x = state.pack();
    let mut r0 = vec![0.0; x.len()];
    solver.residual(&x, &mut r0);
    let v = rough_field(x.len(), 3);
    let mut out = vec![0.0; x.len()];
    c.bench_function("jacobian_action/64", |b| b.iter(|| solver.jacobian_action(&x, &r0, black_box(&v), &mut out)));
}

fn time_step_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("advance_step");
    group.sample_size(10);
    for n in [32, 64] {
        let (grid, state, params) = vortex(n);
        let dt = time_step(&grid, &params);
        let cfg = SolverConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| advance_step(&grid, black_box(&state), dt, &params, &cfg).unwrap())
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let (grid, _, _) = vortex(128);
    let field = rough_field(grid.num_cells(), 1);
    c.bench_function("norm/H-2/128", |b| {
        b.iter(|| norm(&grid, &[black_box(&field)], NormSpec::SobolevNeg(2)).unwrap())
    });
    let members: Vec<Vec<f64>> = (0..80).map(|k| rough_field(grid.num_cells(), k)).collect();
    let lists: Vec<Vec<&[f64]>> = members.iter().map(|m| vec![m.as_slice()]).collect();
    c.bench_function("mean_and_deviation/80x128^2", |b| b.iter(|| mean_and_deviation(black_box(&lists))));
}

criterion_group!(benches, residual, jacobian_action, time_step_solve, estimators);
criterion_main!(benches);
