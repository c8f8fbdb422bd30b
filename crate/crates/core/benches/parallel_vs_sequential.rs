use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tcs_core::harness::{Preset, RunConfig};
use tcs_core::par::Execution;
use tcs_core::simgen::{generate, ScenarioConfig};
use tcs_core::tcsnet::{estimate_effects, train_ensemble, EstimatorKind, TrainConfig};

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn train_cfg() -> TrainConfig {
    let mut cfg = RunConfig::preset(Preset::Desk).train;
    cfg.members = 4;
    cfg.epochs = 3;
    cfg.propensity.epochs = 2;
    cfg
}

fn ensemble_training(c: &mut Criterion) {
    let data = generate(
        &ScenarioConfig {
            n: 120,
            ..ScenarioConfig::default()
        },
        1,
    )
    .unwrap();
    let cfg = train_cfg();
    let mut group = c.benchmark_group("train_ensemble");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_ensemble(black_box(&data.samples), &cfg, EstimatorKind::Tcs, exec).unwrap())
        });
    }
    group.finish();
}

fn effect_estimation(c: &mut Criterion) {
    let cfg = ScenarioConfig {
        n: 400,
        ..ScenarioConfig::default()
    };
    let train = generate(&cfg, 2).unwrap();
    let test = generate(&cfg, 3).unwrap();
    let ensemble = train_ensemble(&train.samples, &train_cfg(), EstimatorKind::Tcs, Execution::Sequential).unwrap();
    let mut group = c.benchmark_group("estimate_effects");
    group.sample_size(20);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_effects(&ensemble, black_box(&test.samples), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble_training, effect_estimation);
criterion_main!(benches);
