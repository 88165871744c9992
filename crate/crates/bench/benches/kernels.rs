use arena_core::agents::best_response_event;
use arena_core::concentration::{ChainPlan, ChainVariant};
use arena_core::mechanism::mw_select;
use arena_core::rng::stream_rng;
use arena_core::scoring::score_totals;
use arena_core::{EventDistribution, ReportMatrix};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn reports(n: usize, m: usize) -> ReportMatrix {
    ReportMatrix::from_rows(
        (0..n)
            .map(|i| {
                (0..m)
                    .map(|t| ((i * 7 + t * 3) % 10) as f64 / 10.0)
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

fn selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_and_select");
    for m in [1_000, 50_752] {
        let r = reports(4, m);
        let dist = EventDistribution::hidden_coin_groups(m, 1, 0.01).unwrap();
        let y = dist.sample(&mut stream_rng(1, 0));
        group.bench_with_input(BenchmarkId::new("score_totals", m), &m, |b, _| {
            b.iter(|| score_totals(black_box(&r), black_box(&y)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mw_select", m), &m, |b, _| {
            b.iter(|| mw_select(black_box(&r), black_box(&y), 0.0025).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sample", m), &m, |b, _| {
            let mut rng = stream_rng(2, 0);
            b.iter(|| dist.sample(&mut rng))
        });
    }
    group.finish();
}

fn best_response(c: &mut Criterion) {
    let belief = EventDistribution::hidden_coin_groups(6, 3, 0.1).unwrap();
    let r = reports(3, 6);
    let conditioning = [(3, 1), (4, 1), (5, 1)];
    c.bench_function("best_response_event_b3", |b| {
        b.iter(|| best_response_event(black_box(&r), 0, 0, &belief, &conditioning, 0.02).unwrap())
    });
}

fn chain(c: &mut Criterion) {
    let dist = EventDistribution::hidden_coin_groups(6, 2, 0.1).unwrap();
    let plan = ChainPlan::new(&dist, ChainVariant::Faithful).unwrap();
    c.bench_function("chain_sample_m6", |b| {
        let mut rng = stream_rng(3, 0);
        b.iter(|| plan.sample(&dist, &mut rng))
    });
}

criterion_group!(benches, selection, best_response, chain);
criterion_main!(benches);
