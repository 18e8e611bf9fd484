use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dmcfuse::exec::Execution;
use dmcfuse::experiments::monte_carlo_point;
use dmcfuse::scenario::{Scenario, SubBand, Thresholds};

fn small_scenario() -> Scenario {
    let mut s = Scenario::table1();
    for b in &mut s.subbands {
        *b = SubBand { n: 32, ..*b };
    }
    s
}

fn trials(c: &mut Criterion) {
    let s = small_scenario();
    let th = Thresholds::default();
    let mut group = c.benchmark_group("monte_carlo_point");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 16), &exec, |b, exec| {
            b.iter(|| monte_carlo_point(black_box(&s), &th, 16, 1, 0, *exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
