use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lens_core::bench::{BenchConfig, Workspace};
use lens_core::exec::Jobs;
use lens_core::perception::ScorerId;
use lens_core::scene_sim::LightId;

fn config(jobs: usize) -> BenchConfig {
    BenchConfig {
        num_classes: 6,
        samples_per_class: 2,
        train_samples_per_class: 4,
        lights: vec![LightId::L1, LightId::L3, LightId::L6],
        seeds: vec![1],
        jobs,
        ..BenchConfig::default()
    }
}

fn prepare_seed(c: &mut Criterion) {
    let mut group = c.benchmark_group("prepare_seed");
    group.sample_size(10);
    for (label, jobs) in [("jobs1", Jobs::SEQUENTIAL), ("parallel", Jobs::AUTO)] {
        let ws = Workspace::new(&config(jobs.0)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(label), &ws, |b, ws| {
            b.iter(|| ws.prepare_seed(1, &[ScorerId::Confidence]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, prepare_seed);
criterion_main!(benches);
