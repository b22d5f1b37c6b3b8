mod common;

use common::{random_edges, random_matrix};
use fedgraph_core::laplacian::{
    laplacian_reg, laplacian_reg_grad, laplacian_reg_heads, laplacian_reg_heads_grad, total_loss,
};
use fedgraph_core::ops::{finite_diff_check, FiniteDiff};
use fedgraph_core::{DenseMatrix, Graph};
use proptest::prelude::*;

fn graph(n: usize, edges: Vec<(usize, usize)>) -> Graph {
    Graph::new(n, edges, vec![None; n], 1, vec![], vec![]).unwrap()
}

/// `(2 / Σ|N_i|) · tr(Xᵀ L X)` with `L = D − A` built without self-loops.
fn trace_oracle(g: &Graph, x: &DenseMatrix) -> f64 {
    let n = g.num_nodes();
    let mut lap = DenseMatrix::zeros(n, n);
    for &(u, v) in g.edges() {
        lap.row_mut(u)[v] -= 1.0;
        lap.row_mut(v)[u] -= 1.0;
        lap.row_mut(u)[u] += 1.0;
        lap.row_mut(v)[v] += 1.0;
    }
    let mut tr = 0.0;
    for c in 0..x.cols() {
        for i in 0..n {
            for j in 0..n {
                tr += x.row(i)[c] * lap.row(i)[j] * x.row(j)[c];
            }
        }
    }
    2.0 * tr / (n + 2 * g.num_edges()) as f64
}

fn components(g: &Graph) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..g.num_nodes()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for &(u, v) in g.edges() {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        parent[a] = b;
    }
    (0..g.num_nodes()).map(|i| find(&mut parent, i)).collect()
}

#[test]
fn trace_oracle_on_twenty_graphs() {
    for seed in 0..20u64 {
        let n = 2 + (seed as usize * 7) % 29;
        let g = graph(n, random_edges(n, 0.25, seed));
        let x = random_matrix(n, 5, seed + 100);
        let reg = laplacian_reg(&x, &g.neighbor_sets()).unwrap();
        let oracle = trace_oracle(&g, &x);
        assert!((reg - oracle).abs() <= 1e-10, "seed {seed}: {reg} vs {oracle}");
    }
}

proptest! {
    #[test]
    fn matches_trace_oracle(n in 1usize..=30, p in 0.0f64..0.6, seed in any::<u64>()) {
        let g = graph(n, random_edges(n, p, seed));
        let x = random_matrix(n, 3, seed ^ 9);
        let reg = laplacian_reg(&x, &g.neighbor_sets()).unwrap();
        prop_assert!(reg >= 0.0);
        prop_assert!((reg - trace_oracle(&g, &x)).abs() <= 1e-10);
    }

    #[test]
    fn translation_invariant(n in 1usize..=30, seed in any::<u64>(), shift in -5.0f64..5.0) {
        let g = graph(n, random_edges(n, 0.3, seed));
        let nb = g.neighbor_sets();
        let x = random_matrix(n, 4, seed ^ 3);
        let moved = DenseMatrix::from_fn(n, 4, |i, j| x.row(i)[j] + shift * (j as f64 + 1.0));
        let a = laplacian_reg(&x, &nb).unwrap();
        let b = laplacian_reg(&moved, &nb).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
        let ga = laplacian_reg_grad(&x, &nb).unwrap();
        let gb = laplacian_reg_grad(&moved, &nb).unwrap();
        prop_assert!(ga.max_abs_diff(&gb).unwrap() <= 1e-12);
    }

    #[test]
    fn gradient_sums_to_zero_per_component(n in 1usize..=30, seed in any::<u64>()) {
        let g = graph(n, random_edges(n, 0.1, seed));
        let x = random_matrix(n, 3, seed ^ 4);
        let grad = laplacian_reg_grad(&x, &g.neighbor_sets()).unwrap();
        let comp = components(&g);
        for root in 0..n {
            for c in 0..3 {
                let s: f64 = (0..n).filter(|&i| comp[i] == root).map(|i| grad.row(i)[c]).sum();
                prop_assert!(s.abs() <= 1e-12, "component {root}: {s:e}");
            }
        }
    }

    #[test]
    fn zero_iff_constant_on_components(n in 1usize..=20, seed in any::<u64>()) {
        let g = graph(n, random_edges(n, 0.15, seed));
        let comp = components(&g);
        let x = DenseMatrix::from_fn(n, 2, |i, j| (comp[i] * 3 + j) as f64);
        prop_assert_eq!(laplacian_reg(&x, &g.neighbor_sets()).unwrap(), 0.0);
    }
}

#[test]
fn hand_enumerated_pair() {
    let g = graph(2, vec![(0, 1)]);
    let nb = g.neighbor_sets();
    let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    assert_eq!(laplacian_reg(&x, &nb).unwrap(), 0.5);
    let grad = laplacian_reg_grad(&x, &nb).unwrap();
    assert_eq!(grad.as_slice(), &[1.0, 0.0, -1.0, 0.0]);
    let none = graph(2, vec![]);
    assert_eq!(laplacian_reg(&x, &none.neighbor_sets()).unwrap(), 0.0);
    let same = DenseMatrix::from_fn(2, 2, |_, j| j as f64);
    assert_eq!(laplacian_reg(&same, &nb).unwrap(), 0.0);
    assert!(laplacian_reg_grad(&same, &nb).unwrap().as_slice().iter().all(|g| *g == 0.0));
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..5 {
        let g = graph(6, random_edges(6, 0.5, seed));
        let nb = g.neighbor_sets();
        let x = random_matrix(6, 3, seed + 50);
        let grad = laplacian_reg_grad(&x, &nb).unwrap();
        let err = finite_diff_check(|z| laplacian_reg(z, &nb), &x, &grad, FiniteDiff::default()).unwrap();
        assert!(err <= 1e-6, "rel err {err:e}");
        let xh = random_matrix(6, 8, seed + 60);
        let gh = laplacian_reg_heads_grad(&xh, &nb, 2).unwrap();
        let err = finite_diff_check(|z| laplacian_reg_heads(z, &nb, 2), &xh, &gh, FiniteDiff::default()).unwrap();
        assert!(err <= 1e-6, "heads rel err {err:e}");
    }
}

#[test]
fn heads_average_per_head_values() {
    let g = graph(5, random_edges(5, 0.5, 3));
    let nb = g.neighbor_sets();
    let x = random_matrix(5, 6, 4);
    let per: f64 = (0..3)
        .map(|h| laplacian_reg(&DenseMatrix::from_fn(5, 2, |i, j| x.row(i)[2 * h + j]), &nb).unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((laplacian_reg_heads(&x, &nb, 2).unwrap() - per).abs() <= 1e-15);
}

#[test]
fn total_loss_arithmetic() {
    assert_eq!(total_loss(1.0, 0.5, 100.0), 51.0);
    assert_eq!(total_loss(1.3, 0.7, 0.0), 1.3);
    assert_eq!(total_loss(1.3, 0.0, 42.0), 1.3);
}
