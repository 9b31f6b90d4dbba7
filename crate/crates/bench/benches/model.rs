use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jointparse::ScoreTables;
use jointparse_bench::{sentence, toy_model};
use std::hint::black_box;

fn scorer(c: &mut Criterion) {
    let model = toy_model(true);
    let mut group = c.benchmark_group("model");
    for n in [10, 20, 40] {
        let s = sentence(n);
        group.bench_with_input(BenchmarkId::new("forward", n), &s, |b, s| {
            b.iter(|| model.forward(black_box(s), true))
        });
        let f = model.forward(&s, true);
        let mut upstream = ScoreTables::zeros(n, true);
        upstream.span.fill(1.0);
        upstream.arc.fill(1.0);
        group.bench_with_input(BenchmarkId::new("backward", n), &upstream, |b, up| {
            b.iter(|| model.backward(&f.tape, black_box(up), Some(&f.labels)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("predict", n), &s, |b, s| {
            b.iter(|| jointparse::predict(&model, black_box(s), true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scorer);
criterion_main!(benches);
