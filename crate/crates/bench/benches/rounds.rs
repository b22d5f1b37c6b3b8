use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fedgraph_bench::{dataset, fed_config, federation};
use fedgraph_core::federation::{run_round, Mode};
use fedgraph_core::ModelKind;

fn rounds(c: &mut Criterion) {
    let data = dataset(500, 4.0, 200, 5);
    let mut group = c.benchmark_group("round n=500 d=200");
    group.sample_size(20);
    for (kind, mode) in [
        (ModelKind::Gcn, Mode::Nfedgnn),
        (ModelKind::Gat, Mode::Nfedgnn),
        (ModelKind::Gcn, Mode::Cnfgnn),
    ] {
        let cfg = fed_config(kind, mode, &data);
        group.bench_function(format!("{kind} {mode}"), |b| {
            b.iter_batched(
                || federation(&cfg, &data),
                |(mut server, mut clients)| run_round(&mut server, &mut clients, &cfg, 1).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, rounds);
criterion_main!(benches);
