//! Synthetic fixtures: Erdős–Rényi topology with planted classes.
//!
//! Node `i` belongs to class `π(i) mod c` for a random permutation `π`.
//! Binary feature `j` of a class-`k` node is on with probability `p_in`
//! when `j mod c = k` and `p_out` otherwise, so classes are separable from
//! features alone when `d ≥ c`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::harness::dataset::Dataset;
use crate::rng::StreamKey;

pub const MAX_SYNTH_NODES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n: usize,
    pub p_edge: f64,
    pub d: usize,
    pub c: usize,
    /// Share of nodes in the train mask; the rest form the test mask.
    pub label_fraction: f64,
    pub p_in: f64,
    pub p_out: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, n: usize, p_edge: f64, d: usize, c: usize) -> Self {
        Self {
            seed,
            n,
            p_edge,
            d,
            c,
            label_fraction: 0.5,
            p_in: 0.8,
            p_out: 0.05,
        }
    }
}

pub fn synth_graph(cfg: &SynthConfig) -> Result<Dataset> {
    let fail = |msg: String| Err(Error::Config(msg));
    if cfg.n == 0 || cfg.n > MAX_SYNTH_NODES {
        return fail(format!("n must be in 1..={MAX_SYNTH_NODES}, got {}", cfg.n));
    }
    if cfg.c == 0 || cfg.c > cfg.n {
        return fail(format!("need 1 <= c <= n, got c = {} for n = {}", cfg.c, cfg.n));
    }
    if cfg.d == 0 {
        return fail("d must be >= 1".into());
    }
    for (name, p) in [("p_edge", cfg.p_edge), ("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return fail(format!("{name} must be in [0, 1], got {p}"));
        }
    }
    if !(cfg.label_fraction > 0.0 && cfg.label_fraction < 1.0) {
        return fail(format!("label_fraction must be in (0, 1), got {}", cfg.label_fraction));
    }

    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(&mut StreamKey::new(cfg.seed, "synth/classes").rng());
    let mut labels = vec![0; cfg.n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank % cfg.c;
    }

    let mut rng = StreamKey::new(cfg.seed, "synth/edges").rng();
    let mut edges = Vec::new();
    if cfg.p_edge > 0.0 {
        for u in 0..cfg.n {
            for v in u + 1..cfg.n {
                if rng.random::<f64>() < cfg.p_edge {
                    edges.push((u, v));
                }
            }
        }
    }

    let mut rng = StreamKey::new(cfg.seed, "synth/features").rng();
    let features = DenseMatrix::from_fn(cfg.n, cfg.d, |i, j| {
        let p = if j % cfg.c == labels[i] { cfg.p_in } else { cfg.p_out };
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    });

    let mut nodes: Vec<usize> = (0..cfg.n).collect();
    nodes.shuffle(&mut StreamKey::new(cfg.seed, "synth/split").rng());
    let n_train = ((cfg.n as f64 * cfg.label_fraction).round() as usize).clamp(1, cfg.n.saturating_sub(1).max(1));
    let train = nodes[..n_train].to_vec();
    let test = nodes[n_train..].to_vec();

    let graph = Graph::new(
        cfg.n,
        edges,
        labels.into_iter().map(Some).collect(),
        cfg.c,
        train,
        test,
    )?
    .with_feature_dim(cfg.d);
    Ok(Dataset { graph, features })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_edges_when_p_zero() {
        let ds = synth_graph(&SynthConfig::new(1, 20, 0.0, 4, 2)).unwrap();
        assert_eq!(ds.graph.num_edges(), 0);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(synth_graph(&SynthConfig::new(1, 3, 0.1, 4, 4)).is_err());
        assert!(synth_graph(&SynthConfig::new(1, 10, 1.5, 4, 2)).is_err());
        assert!(synth_graph(&SynthConfig::new(1, 20_000, 0.0, 4, 2)).is_err());
    }

    #[test]
    fn deterministic() {
        let a = synth_graph(&SynthConfig::new(3, 30, 0.2, 6, 3)).unwrap();
        let b = synth_graph(&SynthConfig::new(3, 30, 0.2, 6, 3)).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert_eq!(a.graph.train_mask(), b.graph.train_mask());
    }

    #[test]
    fn balanced_classes() {
        let ds = synth_graph(&SynthConfig::new(0, 10, 0.0, 2, 2)).unwrap();
        let ones = ds.graph.labels().iter().filter(|y| **y == Some(1)).count();
        assert_eq!(ones, 5);
    }
}
