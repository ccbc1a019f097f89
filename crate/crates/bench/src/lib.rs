//! Criterion benchmarks for stage-graph construction and the finite-instance
//! oracle.

use criterion::{BenchmarkId, Criterion, Throughput};
use stagebound::verify::{self, SimTarget};
use stagebound::{analyze, corpus, Limits};

/// Corpus rows small enough to be sampled many times.
pub const STAGE_GRAPH_ROWS: [&str; 6] = [
    "majority_ex2",
    "majority_ex1",
    "flock_sum_c5",
    "remainder_m3",
    "avc_m3_d1",
    "threshold_2v_lt0",
];

pub fn stage_graphs(c: &mut Criterion) {
    let mut group = c.benchmark_group("stage_graph");
    for name in STAGE_GRAPH_ROWS {
        let p = (corpus::benchmark(name).unwrap().build)();
        let stages = corpus::benchmark(name).unwrap().stages;
        group.throughput(Throughput::Elements(stages as u64));
        group.bench_with_input(BenchmarkId::from_parameter(name), &p, |b, p| {
            b.iter(|| analyze(p, &Limits::default()).unwrap())
        });
    }
    group.finish();
}

pub fn oracle(c: &mut Criterion) {
    let p = corpus::majority_ex2();
    let mut group = c.benchmark_group("oracle");
    for n in [6u32, 10] {
        let c0 = p.initial_configurations(n).swap_remove(n as usize / 2);
        group.bench_with_input(BenchmarkId::new("exact_expectation", n), &c0, |b, c0| {
            b.iter(|| verify::expected_steps_to_stable(&p, c0, 1_000_000).unwrap())
        });
    }
    let (sg, _) = analyze(&p, &Limits::default()).unwrap();
    group.bench_function("check_max_n_6", |b| b.iter(|| verify::check_stage_graph(&p, &sg, 6, 1_000_000)));
    let c0 = p.initial_configurations(10).swap_remove(5);
    group.bench_function("simulate_1000", |b| {
        b.iter(|| verify::simulate(&p, &c0, 1000, 1, &SimTarget::Stable, 10_000_000, 1_000_000).unwrap())
    });
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    stage_graphs(c);
    oracle(c);
}
