use std::sync::Arc;

use abm_calib_core::acquisition::{optimize_acquisition, AcquisitionContext, AcquisitionOptions};
use abm_calib_core::forest::{ForestParams, RandomForest, TrainingSet};
use abm_calib_core::rng::rng_from;
use abm_calib_core::simulators::toy::toy_simulate_with;
use abm_calib_core::simulators::{ToyScenario, ToyScenarioConfig};
use abm_calib_core::space::UnitVector;
use abm_calib_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn training_set(n: usize, d: usize) -> (Vec<UnitVector>, Vec<f64>) {
    let mut rng = rng_from(11);
    let xs: Vec<UnitVector> = (0..n)
        .map(|_| UnitVector((0..d).map(|_| rng.gen::<f64>()).collect()))
        .collect();
    let ys = xs
        .iter()
        .map(|x| x.0.iter().map(|v| (v - 0.4) * (v - 0.4)).sum())
        .collect();
    (xs, ys)
}

fn forest_fit(c: &mut Criterion) {
    let (xs, ys) = training_set(200, 24);
    let data = TrainingSet::new(&xs, &ys).unwrap();
    let params = ForestParams::default();
    let mut group = c.benchmark_group("forest_fit_1000_trees");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| RandomForest::fit_with(&data, &params, 3, exec).unwrap())
        });
    }
    group.finish();
}

fn acquisition(c: &mut Criterion) {
    let (xs, ys) = training_set(60, 5);
    let data = TrainingSet::new(&xs, &ys).unwrap();
    let forest = RandomForest::fit(&data, &ForestParams::default(), 3).unwrap();
    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let ctx = AcquisitionContext {
        forest: Some(&forest),
        incumbent: best,
        incumbent_point: None,
        evaluated: &xs,
    };
    let opts = AcquisitionOptions::default();
    let mut group = c.benchmark_group("acquisition_10_starts");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| optimize_acquisition(&ctx, &opts, 5, exec).unwrap())
        });
    }
    group.finish();
}

fn toy_simulation(c: &mut Criterion) {
    let scenario = Arc::new(ToyScenario::generate(&ToyScenarioConfig::default()).unwrap());
    let space = scenario.layout.space();
    let theta = scenario.layout.reference_theta();
    let mut group = c.benchmark_group("toy_simulate_5000_agents");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| toy_simulate_with(&scenario, &space, &theta, 7, exec, false).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forest_fit, acquisition, toy_simulation);
criterion_main!(benches);
