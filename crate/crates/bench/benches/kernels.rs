use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use semproj_bench::uniform_series;
use semproj_core::axes::SemanticAxis;
use semproj_core::projection::project;
use semproj_core::psychometrics::{pearson, wasserstein_1d, wasserstein_z};
use semproj_core::{AnchorKind, AnchorSet, Construct, SentimentLexicon};

fn bench_pearson(c: &mut Criterion) {
    let mut group = c.benchmark_group("pearson");
    for n in [100usize, 1_000, 10_000] {
        let x = uniform_series(n, 1);
        let y = uniform_series(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| pearson(black_box(&x), black_box(&y)).unwrap())
        });
    }
    group.finish();
}

fn bench_wasserstein(c: &mut Criterion) {
    let mut group = c.benchmark_group("wasserstein");
    for n in [100usize, 1_000, 10_000] {
        let x = uniform_series(n, 3);
        let y: Vec<f64> = uniform_series(n + n / 3, 4).iter().map(|v| v * v).collect();
        group.bench_with_input(BenchmarkId::new("w1", n), &n, |b, _| {
            b.iter(|| wasserstein_1d(black_box(&x), black_box(&y)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("w1_z", n), &n, |b, _| {
            b.iter(|| wasserstein_z(black_box(&x), black_box(&y)).unwrap())
        });
    }
    group.finish();
}

fn bench_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("projection");
    for dim in [64usize, 384, 1024] {
        let direction = uniform_series(dim, 5);
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let axis = SemanticAxis {
            name: "bench".into(),
            construct: Construct::Depression,
            model_id: "bench".into(),
            dim,
            direction,
            norm,
            provenance: AnchorSet {
                axis_name: "bench".into(),
                construct: Construct::Depression,
                kind: AnchorKind::Word,
                positive: vec!["sad".into()],
                negative: vec!["happy".into()],
            },
        };
        let x = uniform_series(dim, 6);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| project(black_box(&x), &axis).unwrap())
        });
    }
    group.finish();
}

fn bench_sentiment(c: &mut Criterion) {
    let lexicon = SentimentLexicon::reference();
    let text = "I haven't been sleeping well and honestly everything feels pretty hopeless, \
                though my friends have been really kind and supportive this week!";
    c.bench_function("sentiment/sentence", |b| b.iter(|| lexicon.analyze(black_box(text))));
}

criterion_group!(
    benches,
    bench_pearson,
    bench_wasserstein,
    bench_projection,
    bench_sentiment
);
criterion_main!(benches);
