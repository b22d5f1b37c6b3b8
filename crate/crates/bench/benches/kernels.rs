use criterion::{criterion_group, criterion_main, Criterion};
use fedgraph_bench::{dataset, random_matrix};
use fedgraph_core::laplacian::{laplacian_reg, laplacian_reg_grad};
use fedgraph_core::model::attention;
use fedgraph_core::ops;
use std::hint::black_box;

fn kernels(c: &mut Criterion) {
    let data = dataset(2000, 4.0, 64, 7);
    let adj = data.graph.normalize();
    let nb = data.graph.neighbor_sets();
    let x = random_matrix(2000, 16, 1);
    let w = random_matrix(16, 7, 2);
    let a = random_matrix(1, 32, 3);

    c.bench_function("spmm 2000x16", |b| b.iter(|| ops::spmm(adj.csr(), black_box(&x)).unwrap()));
    c.bench_function("spmm_backward 2000x16", |b| b.iter(|| ops::spmm_backward(adj.csr(), black_box(&x)).unwrap()));
    c.bench_function("matmul 2000x16x7", |b| b.iter(|| ops::matmul(black_box(&x), &w).unwrap()));
    c.bench_function("features x W 2000x64x16", |b| {
        let wf = random_matrix(64, 16, 4);
        b.iter(|| ops::matmul(black_box(&data.features), &wf).unwrap())
    });
    c.bench_function("attention 2000x16", |b| {
        b.iter(|| attention(black_box(&x), a.as_slice(), &nb, 0.2, None).unwrap())
    });
    c.bench_function("laplacian_reg 2000x16", |b| b.iter(|| laplacian_reg(black_box(&x), &nb).unwrap()));
    c.bench_function("laplacian_reg_grad 2000x16", |b| b.iter(|| laplacian_reg_grad(black_box(&x), &nb).unwrap()));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
