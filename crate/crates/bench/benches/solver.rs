use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use heston_hjb::{
    assemble, build_trapezoid, heston_cf_call, solve_fixed, solve_hjb, structured_triangulation, ControlInterval,
    CoordinateMap, Extremum, HestonParams, Mesh, Payoff, SurfaceSampler, TruncatedDomain,
};

fn mesh(n_y: usize, n_z: usize) -> Mesh {
    let map = CoordinateMap::from_params(&HestonParams::case_study()).unwrap();
    let trap = build_trapezoid(&TruncatedDomain::case_study(), &map).unwrap();
    structured_triangulation(&trap, n_y, n_z).unwrap()
}

fn solver(c: &mut Criterion) {
    let params = HestonParams::case_study();
    let payoff = Payoff::butterfly(50.0, 20.0).unwrap();
    let l = ControlInterval::new(-2.4, -1.6);
    let m = mesh(32, 24);
    let map = m.domain().map;

    c.bench_function("assemble 32x24", |b| {
        b.iter(|| assemble(black_box(&m), &params, &payoff, &map, &l).unwrap())
    });

    let op = assemble(&m, &params, &payoff, &map, &l).unwrap();
    c.bench_function("fixed solve 32x24, 20 steps", |b| {
        b.iter(|| solve_fixed(black_box(&op), -2.0, 20).unwrap())
    });
    c.bench_function("hjb sup 32x24, 20 steps", |b| {
        b.iter(|| solve_hjb(black_box(&op), &l, 20, Extremum::Sup).unwrap())
    });

    let surface = solve_hjb(&op, &l, 20, Extremum::Sup).unwrap();
    let sampler = SurfaceSampler::new(&m);
    c.bench_function("sample 101x61 grid", |b| {
        b.iter(|| sampler.sample_grid(black_box(&surface), 0.0, 101, 61).unwrap())
    });
}

fn oracles(c: &mut Criterion) {
    let params = HestonParams::case_study();
    c.bench_function("characteristic-function call", |b| {
        b.iter(|| heston_cf_call(&params, black_box(50.0), 0.09, params.maturity, 50.0).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = solver, oracles
}
criterion_main!(benches);
