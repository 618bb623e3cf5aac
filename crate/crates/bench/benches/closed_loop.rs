use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sdsynth_core::{
    bernoulli_ci, build_plant, linearize_closed_loop, pid_family, sample_uncertainty,
    simulate_outcome, stability_check, CiMethod, DecentralizedController, PlantLinearization,
    SolverConfig,
};

fn bench_simulate(c: &mut Criterion) {
    let plant = build_plant("powertrain", &BTreeMap::new()).unwrap();
    let ctrl =
        DecentralizedController::single(pid_family(2, &[0.2082, 0.0759, -4.9551e-3]).unwrap());
    let realization = sample_uncertainty(plant.model.as_ref(), 1, 0);
    let mut group = c.benchmark_group("simulate_outcome/powertrain");
    for solver in [
        SolverConfig::euler(8),
        SolverConfig::rk4(8),
        SolverConfig::rk4(64),
    ] {
        let id = format!("{:?}x{}", solver.mode, solver.substeps);
        group.bench_with_input(BenchmarkId::from_parameter(id), &solver, |b, solver| {
            b.iter(|| simulate_outcome(&plant, &ctrl, black_box(&realization), solver).unwrap())
        });
    }
    group.finish();
}

fn bench_stability(c: &mut Criterion) {
    let plant = build_plant("artificial-pancreas", &BTreeMap::new()).unwrap();
    let lin = PlantLinearization::new(&plant).unwrap();
    let ctrl = pid_family(2, &[-5.716e-3, -1.88e-7, -0.2002]).unwrap();
    c.bench_function("stability/artificial-pancreas", |b| {
        b.iter(|| {
            let ss = ctrl.to_state_space();
            let cl = lin.close_loop(black_box(&ss)).unwrap();
            stability_check(&cl)
        })
    });
    c.bench_function("linearize/artificial-pancreas", |b| {
        b.iter(|| {
            linearize_closed_loop(
                black_box(&plant),
                &DecentralizedController::single(ctrl.clone()),
            )
            .unwrap()
        })
    });
}

fn bench_ci(c: &mut Criterion) {
    let mut group = c.benchmark_group("bernoulli_ci");
    for method in [CiMethod::Bayesian, CiMethod::ClopperPearson] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{method:?}")),
            &method,
            |b, m| b.iter(|| bernoulli_ci(black_box(453), black_box(500), 0.99, *m).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_stability, bench_ci);
criterion_main!(benches);
