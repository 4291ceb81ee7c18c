use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use taskforge::parser::validate_structured_output;
use taskforge::{expand, generalize, DEFAULT_MAX_DEPTH};
use taskforge_bench::{
    chain_library, completion, fixture_backend, generalize_case, run_table1, table1_script,
};

fn bench_expand(c: &mut Criterion) {
    let mut group = c.benchmark_group("expand");
    for depth in [4, 8, 12] {
        let (lib, root) = chain_library(depth, 2);
        group.bench_with_input(BenchmarkId::from_parameter(depth), &depth, |b, _| {
            b.iter(|| expand(black_box(&lib), black_box(&root), DEFAULT_MAX_DEPTH).unwrap())
        });
    }
    group.finish();
}

fn bench_generalize(c: &mut Criterion) {
    let mut group = c.benchmark_group("generalize");
    for len in [4, 16, 64] {
        let (parent, steps) = generalize_case(4, len);
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| generalize(black_box(&parent), black_box(&steps)).unwrap())
        });
    }
    group.finish();
}

fn bench_validate(c: &mut Criterion) {
    let mut group = c.benchmark_group("validate_structured_output");
    for lines in [1, 8, 32] {
        let text = completion(lines);
        group.bench_with_input(BenchmarkId::from_parameter(lines), &text, |b, text| {
            b.iter(|| validate_structured_output(black_box(text)).unwrap())
        });
    }
    group.finish();
}

fn bench_table1(c: &mut Criterion) {
    let backend = fixture_backend();
    let script = table1_script();
    c.bench_function("table1_replay", |b| {
        b.iter(|| run_table1(backend.clone(), black_box(&script)))
    });
}

criterion_group!(
    benches,
    bench_expand,
    bench_generalize,
    bench_validate,
    bench_table1
);
criterion_main!(benches);
