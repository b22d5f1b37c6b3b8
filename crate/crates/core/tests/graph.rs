mod common;

use common::{cora_dir, random_edges};
use fedgraph_core::harness::{load_dataset, FeatureNorm};
use fedgraph_core::{DenseMatrix, Graph};
use proptest::prelude::*;

fn unlabeled(n: usize, edges: Vec<(usize, usize)>) -> Graph {
    Graph::new(n, edges, vec![None; n], 1, vec![], vec![]).unwrap()
}

/// D̃^-½ (A + I) D̃^-½ built densely from the edge list.
fn dense_normalized(n: usize, edges: &[(usize, usize)]) -> DenseMatrix {
    let mut a = DenseMatrix::identity(n);
    for &(u, v) in edges {
        a.row_mut(u)[v] = 1.0;
        a.row_mut(v)[u] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    DenseMatrix::from_fn(n, n, |i, j| a.row(i)[j] / (deg[i].sqrt() * deg[j].sqrt()))
}

proptest! {
    #[test]
    fn normalize_matches_dense_oracle(n in 1usize..50, p in 0.0f64..0.5, seed in any::<u64>()) {
        let edges = random_edges(n, p, seed);
        let g = unlabeled(n, edges.clone());
        let adj = g.normalize();
        let d = adj.to_dense().max_abs_diff(&dense_normalized(n, &edges)).unwrap();
        prop_assert!(d <= 1e-12, "diff {d:e}");
        let nb = g.neighbor_sets();
        for i in 0..n {
            prop_assert_eq!(adj.row(i).0.len(), nb.degree(i));
            prop_assert!(nb.get(i).contains(&i));
        }
        prop_assert_eq!(nb.total(), n + 2 * g.num_edges());
    }

    #[test]
    fn normalized_adjacency_is_symmetric(n in 2usize..30, seed in any::<u64>()) {
        let dense = unlabeled(n, random_edges(n, 0.3, seed)).normalize().to_dense();
        prop_assert_eq!(dense.clone(), dense.transpose());
    }

    #[test]
    fn edge_direction_and_repeats_do_not_matter(n in 2usize..20, seed in any::<u64>()) {
        let edges = random_edges(n, 0.3, seed);
        let mut noisy: Vec<_> = edges.iter().map(|&(u, v)| (v, u)).collect();
        noisy.extend(edges.iter().copied());
        let (a, b) = (unlabeled(n, edges), unlabeled(n, noisy));
        prop_assert_eq!(a.edges(), b.edges());
    }
}

#[test]
fn hand_evaluated_normalizations() {
    assert_eq!(unlabeled(1, vec![]).normalize().to_dense().as_slice(), &[1.0]);
    assert_eq!(unlabeled(2, vec![(0, 1)]).normalize().to_dense().as_slice(), &[0.5; 4]);
    let tri = unlabeled(3, vec![(0, 1), (1, 2), (0, 2)]).normalize().to_dense();
    for v in tri.as_slice() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn isolated_node_keeps_only_self_loop() {
    let g = unlabeled(3, vec![(0, 1)]);
    let adj = g.normalize();
    assert_eq!(adj.row(2), (&[2][..], &[1.0][..]));
}

#[test]
fn minimal_graph_and_validation() {
    let g = Graph::new(2, [(0, 1)], vec![Some(0), Some(0)], 1, vec![0], vec![1]).unwrap();
    assert_eq!(g.num_edges(), 1);
    assert!(g.num_classes() >= 1);
    assert!(Graph::new(3, [(0, 5)], vec![None; 3], 1, vec![], vec![]).is_err());
}

#[test]
fn cora_fixture_statistics() {
    let ds = load_dataset(&cora_dir(), FeatureNorm::None).unwrap();
    let g = &ds.graph;
    assert_eq!(g.num_nodes(), 2708);
    assert_eq!(g.num_edges(), 5278);
    assert_eq!(g.num_classes(), 7);
    assert_eq!(ds.features.cols(), 1433);
    assert_eq!(g.neighbor_sets().total(), 13264);
    assert!((g.label_rate() - 0.052).abs() < 5e-4, "label rate {}", g.label_rate());
    assert_eq!(g.test_mask().len(), 1000);
}
