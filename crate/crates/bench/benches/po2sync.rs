use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use wls_core::generate::heavy_class;
use wls_core::po2sync::{build_class_policy, po2_round_group, Po2Config};
use wls_core::rng::Streams;
use wls_core::{CommodityId, Evaluator};

fn po2sync(c: &mut Criterion) {
    let ts: Vec<(CommodityId, f64)> = (0..23).map(|i| (CommodityId(i), 1.0 + i as f64 * 0.37)).collect();
    c.bench_function("round_group_23", |b| b.iter(|| po2_round_group(black_box(&ts), 0.2).unwrap()));

    let class = heavy_class(268 * 23, 136, 1.0, 5);
    let cfg = Po2Config::new(0.3);
    let ev = Evaluator { sample_grid: 0, ..Evaluator::default() };
    let mut g = c.benchmark_group("class_policy");
    g.sample_size(10);
    g.bench_function("heavy_6300", |b| {
        let mut draw = 0u64;
        b.iter(|| {
            draw += 1;
            build_class_policy(black_box(&class), &cfg, &Streams::new(draw), &ev).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, po2sync);
criterion_main!(benches);
