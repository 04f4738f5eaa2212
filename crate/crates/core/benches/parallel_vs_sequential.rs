use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lifetime_twin::io::load_preset;
use lifetime_twin::sim::{run_experiment, AtomicTransition, ExperimentConfig};
use lifetime_twin::study::{run_pull_study, PullStudyConfig};
use lifetime_twin::Execution;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn simulate(c: &mut Criterion) {
    let mut config = load_preset("p12_quadrupole").unwrap();
    config.duration_s = 2.0;
    let mut g = c.benchmark_group("run_experiment_2s");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_experiment(&config, exec).unwrap().len())
        });
    }
    g.finish();
}

fn pull_study(c: &mut Criterion) {
    let base = ExperimentConfig::ideal(AtomicTransition::cd_p12(), 2.0, 11);
    let cfg = PullStudyConfig::matched_to(&base, 8).unwrap();
    let mut g = c.benchmark_group("pull_study_8x2s");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_pull_study(&base, &cfg, exec).unwrap().summary.pull_width)
        });
    }
    g.finish();
}

criterion_group!(benches, simulate, pull_study);
criterion_main!(benches);
