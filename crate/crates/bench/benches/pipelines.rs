use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use stochmatch_core::bench::matching_lp_value;
use stochmatch_core::gainfn::{alternate_optimize, GainFunction};
use stochmatch_core::instance::{sample_draw, DrawMode, Instance};
use stochmatch_core::lpcore::{LpProblem, Sense};
use stochmatch_core::simul::{run_balance_equal, run_balance_fractional, run_ranking};

fn lp_solver(c: &mut Criterion) {
    // dense random-ish LP with 60 vars and 60 rows, built deterministically
    let nv = 60;
    let mut lp = LpProblem::new(nv);
    for j in 0..nv {
        lp.set_objective_coeff(j, 1.0 + (j as f64 * 0.37).sin().abs());
    }
    for i in 0..nv {
        let row: Vec<f64> = (0..nv)
            .map(|j| 0.5 + ((i * 31 + j * 17) as f64 * 0.11).sin().abs())
            .collect();
        lp.add_row(row, Sense::Le, 10.0).unwrap();
    }
    c.bench_function("lp_solve_dense_60x60", |b| {
        b.iter(|| black_box(lp.clone().solve().unwrap()))
    });

    let inst = Instance::upper_triangular(40, 0.5).unwrap();
    c.bench_function("matching_lp_upper_triangular_40", |b| {
        b.iter(|| black_box(matching_lp_value(&inst).unwrap()))
    });
}

fn simulators(c: &mut Criterion) {
    let inst = Instance::upper_triangular(40, 0.5).unwrap();
    let draws: Vec<_> = (0..64)
        .map(|s| sample_draw(&inst, s, DrawMode::All))
        .collect();
    c.bench_function("ranking_upper_triangular_40", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % draws.len();
            black_box(run_ranking(&inst, &draws[i]).unwrap())
        })
    });
    c.bench_function("balance_equal_upper_triangular_40", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % draws.len();
            black_box(run_balance_equal(&inst, &draws[i]).unwrap())
        })
    });
    let g = GainFunction::balance_equal_closed_form();
    c.bench_function("balance_fractional_upper_triangular_40", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % draws.len();
            let budgets = draws[i].budgets.as_ref().unwrap();
            black_box(run_balance_fractional(&inst, budgets, &g, 0.01).unwrap())
        })
    });
}

fn gain_optimization(c: &mut Criterion) {
    let mut group = c.benchmark_group("gain");
    group.sample_size(10);
    group.bench_function("alternate_optimize_coarse", |b| {
        b.iter(|| black_box(alternate_optimize(0.1, 4.0, 2).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, lp_solver, simulators, gain_optimization);
criterion_main!(benches);
