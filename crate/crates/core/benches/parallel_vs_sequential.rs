use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hpl_core::analysis::{estimate_many, AnalysisSetup, Granularity};
use hpl_core::envsim::EnvConfig;
use hpl_core::exec::Exec;
use hpl_core::pipeline::{run_bc, run_expert, run_mc, run_prefs, PipelineConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn mc_scoring(c: &mut Criterion) {
    let config = PipelineConfig::default();
    let expert = run_expert(&config).unwrap();
    let reference = run_bc(&config, &expert).unwrap().params;
    let prefs = run_prefs(&config, &expert, &reference, None, Exec::Parallel).unwrap();
    let mut group = c.benchmark_group("mc_group_scoring");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_mc(&config, &prefs.candidates, &reference, exec).unwrap())
        });
    }
    group.finish();
}

fn bias_variance(c: &mut Criterion) {
    let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(8, 0.9), 0.3, 0).unwrap();
    let gs = [Granularity::Traj, Granularity::Step, Granularity::Group { k: 2 }];
    let mut group = c.benchmark_group("bias_variance_replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_many(&setup, &gs, 100, 200, 0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mc_scoring, bias_variance);
criterion_main!(benches);
