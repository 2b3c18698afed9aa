use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use fairrank::decompose::bvn_decompose;
use fairrank::rankers::{self, fair_relaxation};
use fairrank::rng::rng_from;
use fairrank::swapround::{swap_round, DEFAULT_T};
use fairrank_bench::fixture;

fn pipeline(c: &mut Criterion) {
    let (inst, spec) = fixture(500, 25, 1).unwrap();
    let x = fair_relaxation(&inst, &spec).unwrap().into_assignment().unwrap();
    let comb = bvn_decompose(&x).unwrap();

    let mut g = c.benchmark_group("m500_n25");
    g.sample_size(10);
    g.bench_function("relaxation", |b| b.iter(|| fair_relaxation(black_box(&inst), &spec).unwrap()));
    g.bench_function("decomposition", |b| b.iter(|| bvn_decompose(black_box(&x)).unwrap()));
    g.bench_function("swap_round", |b| {
        let mut rng = rng_from(2);
        b.iter(|| swap_round(black_box(&comb), DEFAULT_T, &mut rng).unwrap())
    });
    g.bench_function("nresilient", |b| b.iter(|| rankers::nresilient(black_box(&inst), &spec, 3).unwrap()));
    g.bench_function("uncons", |b| b.iter(|| rankers::uncons(black_box(&inst))));
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
