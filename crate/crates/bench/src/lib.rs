//! Fixtures shared by the benchmarks.

use fedgraph_core::federation::{setup, ClientState, FedConfig, Mode, ServerState};
use fedgraph_core::harness::{synth_graph, Dataset, FeatureNorm, SynthConfig};
use fedgraph_core::{Architecture, DenseMatrix, ModelKind, StreamKey, TrainParams};
use rand::Rng;

/// Row-normalized synthetic graph with mean degree close to `degree`.
pub fn dataset(n: usize, degree: f64, d: usize, c: usize) -> Dataset {
    let p = (degree / (n.max(2) - 1) as f64).min(1.0);
    let mut ds = synth_graph(&SynthConfig::new(0, n, p, d, c)).expect("valid synthetic config");
    FeatureNorm::Row.apply(&mut ds.features);
    ds
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = StreamKey::new(seed, "bench").rng();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn fed_config(kind: ModelKind, mode: Mode, data: &Dataset) -> FedConfig {
    let arch = Architecture::new(kind, data.features.cols(), data.graph.num_classes());
    let mut params = TrainParams::new(kind, 0);
    params.lambda = 10.0;
    FedConfig {
        arch,
        params,
        mode,
        parallel: false,
    }
}

pub fn federation(cfg: &FedConfig, data: &Dataset) -> (ServerState, Vec<ClientState>) {
    setup(cfg, data).expect("valid federation")
}
