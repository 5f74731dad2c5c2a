use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use collnorm::oracle::CollisionTally;
use collnorm::{zoo, Oracle, SampleOracle};

fn alias_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("alias_build");
    for n in [100usize, 10_000, 1_000_000] {
        let dist = zoo::zipf(n, 1.0).unwrap();
        group.bench_function(format!("zipf_n{n}"), |b| {
            b.iter(|| SampleOracle::new(black_box(&dist), 1))
        });
    }
    group.finish();
}

fn alias_draw(c: &mut Criterion) {
    let mut group = c.benchmark_group("alias_draw");
    group.throughput(Throughput::Elements(1_000_000));
    for n in [16usize, 1024, 100_000] {
        let dist = zoo::zipf(n, 1.0).unwrap();
        group.bench_function(format!("zipf_n{n}_1e6"), |b| {
            b.iter_batched(
                || SampleOracle::new(&dist, 7),
                |mut oracle| {
                    for _ in 0..1_000_000 {
                        black_box(oracle.draw().unwrap());
                    }
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn tally_ingest(c: &mut Criterion) {
    let dist = zoo::zipf(1024, 1.0).unwrap();
    let mut oracle = SampleOracle::new(&dist, 3);
    let stream: Vec<u64> = (0..1_000_000).map(|_| oracle.draw().unwrap()).collect();
    let mut group = c.benchmark_group("tally_ingest");
    group.throughput(Throughput::Elements(stream.len() as u64));
    group.bench_function("zipf_n1024_1e6", |b| {
        b.iter(|| {
            let mut tally = CollisionTally::new();
            for &label in &stream {
                tally.ingest(label);
            }
            black_box((tally.s2(), tally.s3()))
        })
    });
    group.finish();
}

criterion_group!(benches, alias_build, alias_draw, tally_ingest);
criterion_main!(benches);
