use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wls_core::generate::{benchmark_policy, generate, Profile};
use wls_core::Evaluator;

fn evaluate(c: &mut Criterion) {
    let ev = Evaluator { sample_grid: 0, ..Evaluator::default() };
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(20);
    for n in [50, 500] {
        let inst = generate(Profile::Uniform, n, 3).unwrap();
        let policy = benchmark_policy(&inst, 8).unwrap();
        g.bench_with_input(BenchmarkId::new("ladder_policy", n), &(inst, policy), |b, (inst, p)| {
            b.iter(|| ev.evaluate(black_box(inst), black_box(p)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, evaluate);
criterion_main!(benches);
