mod common;

use common::{random_graph, random_matrix};
use fedgraph_core::model::attention;
use fedgraph_core::model::gat::attention_backward;
use fedgraph_core::ops::{self, finite_diff_check, masked_softmax_cross_entropy, DropoutMask, FiniteDiff};
use fedgraph_core::{DenseMatrix, Result, StreamKey};
use proptest::prelude::*;

const KERNEL_TOL: f64 = 1e-5;

/// `⟨G, f(X)⟩` as a scalar for finite differences of a matrix-valued kernel.
fn probe(g: &DenseMatrix, f: impl Fn(&DenseMatrix) -> Result<DenseMatrix>) -> impl FnMut(&DenseMatrix) -> Result<f64> {
    let g = g.clone();
    move |x| f(x)?.dot(&g)
}

fn check(name: &str, err: f64) {
    assert!(err <= KERNEL_TOL, "{name}: rel err {err:e}");
}

/// Values bounded away from zero so kinked activations are differentiable at every probe.
fn away_from_zero(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    random_matrix(rows, cols, seed).map(|v| if v.abs() < 0.1 { v + 0.2 * v.signum() + 0.05 } else { v })
}

#[test]
fn matmul_adjoints() {
    let a = random_matrix(3, 4, 1);
    let b = random_matrix(4, 2, 2);
    let g = random_matrix(3, 2, 3);
    let (ga, gb) = ops::matmul_backward(&a, &b, &g).unwrap();
    check("matmul/a", finite_diff_check(probe(&g, |x| ops::matmul(x, &b)), &a, &ga, FiniteDiff::default()).unwrap());
    check("matmul/b", finite_diff_check(probe(&g, |x| ops::matmul(&a, x)), &b, &gb, FiniteDiff::default()).unwrap());
}

#[test]
fn spmm_adjoint() {
    let graph = random_graph(6, 0.5, 2, 4);
    let adj = graph.normalize();
    let x = random_matrix(6, 3, 5);
    let g = random_matrix(6, 3, 6);
    let gx = ops::spmm_backward(adj.csr(), &g).unwrap();
    let err = finite_diff_check(probe(&g, |x| ops::spmm(adj.csr(), x)), &x, &gx, FiniteDiff::default()).unwrap();
    check("spmm", err);
}

#[test]
fn spmm_matches_dense_product() {
    let graph = random_graph(6, 0.6, 2, 11);
    let adj = graph.normalize();
    let x = random_matrix(6, 4, 12);
    let dense = ops::matmul(&adj.to_dense(), &x).unwrap();
    common::assert_close(&ops::spmm(adj.csr(), &x).unwrap(), &dense, 1e-12);
}

#[test]
fn activation_adjoints() {
    let x = away_from_zero(4, 5, 7);
    let g = random_matrix(4, 5, 8);
    let opts = FiniteDiff::default();
    check("relu", finite_diff_check(probe(&g, |x| Ok(ops::relu(x))), &x, &ops::relu_backward(&x, &g).unwrap(), opts).unwrap());
    check(
        "leaky",
        finite_diff_check(
            probe(&g, |x| Ok(ops::leaky_relu(x, 0.2))),
            &x,
            &ops::leaky_relu_backward(&x, &g, 0.2).unwrap(),
            opts,
        )
        .unwrap(),
    );
    check("elu", finite_diff_check(probe(&g, |x| Ok(ops::elu(x))), &x, &ops::elu_backward(&x, &g).unwrap(), opts).unwrap());
}

#[test]
fn hand_activations() {
    let x = DenseMatrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
    assert_eq!(ops::relu(&x).as_slice(), &[0.0, 2.0]);
    assert_eq!(ops::leaky_relu(&x, 0.2).as_slice(), &[-0.2, 2.0]);
}

#[test]
fn concat_adjoint_and_order() {
    let a = random_matrix(5, 16, 1);
    let b = random_matrix(5, 16, 2);
    let c = ops::concat_cols(&[&a, &b]).unwrap();
    assert_eq!(c.shape(), (5, 32));
    assert_eq!(&c.row(3)[..16], a.row(3));
    assert_eq!(&c.row(3)[16..], b.row(3));
    let parts = ops::concat_cols_backward(&c, &[16, 16]).unwrap();
    assert_eq!(parts, vec![a, b]);
}

#[test]
fn cross_entropy_gradient_and_oracle() {
    let logits = random_matrix(4, 3, 9);
    let labels = vec![Some(0), Some(2), Some(1), None];
    let mask = [0, 1];
    let ce = masked_softmax_cross_entropy(&logits, &labels, &mask).unwrap();
    let brute: f64 = mask
        .iter()
        .map(|&i| {
            let r = logits.row(i);
            let lse = r.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - r[labels[i].unwrap()]
        })
        .sum();
    assert!((ce.loss - brute).abs() <= 1e-12);
    let err = finite_diff_check(
        |z| masked_softmax_cross_entropy(z, &labels, &mask).map(|c| c.loss),
        &logits,
        &ce.grad,
        FiniteDiff::default(),
    )
    .unwrap();
    check("cross-entropy", err);
}

#[test]
fn cross_entropy_reference_values() {
    let uniform = DenseMatrix::zeros(1, 7);
    let ce = masked_softmax_cross_entropy(&uniform, &[Some(3)], &[0]).unwrap();
    assert!((ce.loss - 7f64.ln()).abs() < 1e-12);
    let sharp = DenseMatrix::from_rows(&[vec![100.0, 0.0, 0.0]]).unwrap();
    let ce = masked_softmax_cross_entropy(&sharp, &[Some(0)], &[0]).unwrap();
    assert!(ce.loss < 1e-40);
    assert!(ce.grad.as_slice().iter().all(|g| g.abs() < 1e-40));
}

#[test]
fn attention_adjoint() {
    let graph = random_graph(6, 0.5, 2, 21);
    let nb = graph.neighbor_sets();
    let z = random_matrix(6, 3, 22);
    let a = random_matrix(1, 6, 23);
    let g = random_matrix(6, 3, 24);
    let (_, cache) = attention(&z, a.as_slice(), &nb, 0.2, None).unwrap();
    let (gz, ga) = attention_backward(&z, a.as_slice(), &nb, 0.2, &cache, &g).unwrap();
    let opts = FiniteDiff::default();
    let fz = |x: &DenseMatrix| attention(x, a.as_slice(), &nb, 0.2, None)?.0.dot(&g);
    check("attention/z", finite_diff_check(fz, &z, &gz, opts).unwrap());
    let fa = |x: &DenseMatrix| attention(&z, x.as_slice(), &nb, 0.2, None)?.0.dot(&g);
    let ga = DenseMatrix::from_vec(1, 6, ga).unwrap();
    check("attention/a", finite_diff_check(fa, &a, &ga, opts).unwrap());
}

#[test]
fn attention_coefficients_normalize() {
    let graph = random_graph(8, 0.4, 2, 31);
    let nb = graph.neighbor_sets();
    let z = random_matrix(8, 4, 32);
    let (_, cache) = attention(&z, random_matrix(1, 8, 33).as_slice(), &nb, 0.2, None).unwrap();
    let alpha = cache.coefficients();
    for i in 0..8 {
        let s: f64 = alpha[nb.offset(i)..nb.offset(i) + nb.degree(i)].iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
        if nb.degree(i) == 1 {
            assert_eq!(alpha[nb.offset(i)], 1.0);
        }
    }
    // A zero attention vector scores every pair equally.
    let (_, flat) = attention(&z, &[0.0; 8], &nb, 0.2, None).unwrap();
    for i in 0..8 {
        for &v in &flat.coefficients()[nb.offset(i)..nb.offset(i) + nb.degree(i)] {
            assert!((v - 1.0 / nb.degree(i) as f64).abs() <= 1e-15);
        }
    }
}

#[test]
fn dropout_identity_cases_and_mean() {
    let x = random_matrix(3, 4, 41);
    let mut rng = StreamKey::new(0, "t").rng();
    assert_eq!(ops::dropout(&x, 0.0, &mut rng, true).unwrap().0, x);
    assert_eq!(ops::dropout(&x, 0.5, &mut rng, false).unwrap().0, x);
    let ones = DenseMatrix::from_fn(100, 100, |_, _| 1.0);
    let (y, _) = ops::dropout(&ones, 0.5, &mut StreamKey::new(7, "dropout").rng(), true).unwrap();
    let mean = y.as_slice().iter().sum::<f64>() / 1e4;
    assert!((0.94..=1.06).contains(&mean), "mean {mean}");
    assert!(DropoutMask::sample(4, 1.0, &mut rng).is_err());
}

proptest! {
    #[test]
    fn backward_kernels_are_linear(seed in any::<u64>()) {
        let graph = random_graph(6, 0.4, 2, seed);
        let adj = graph.normalize();
        let a = random_matrix(6, 4, seed ^ 1);
        let b = random_matrix(4, 3, seed ^ 2);
        let g = random_matrix(6, 3, seed ^ 3);
        let g2 = g.scale(2.0);
        let (ga, gb) = ops::matmul_backward(&a, &b, &g).unwrap();
        let (ga2, gb2) = ops::matmul_backward(&a, &b, &g2).unwrap();
        prop_assert!(ga.scale(2.0).max_abs_diff(&ga2).unwrap() <= 1e-12);
        prop_assert!(gb.scale(2.0).max_abs_diff(&gb2).unwrap() <= 1e-12);
        let s1 = ops::spmm_backward(adj.csr(), &g).unwrap();
        let s2 = ops::spmm_backward(adj.csr(), &g2).unwrap();
        prop_assert!(s1.scale(2.0).max_abs_diff(&s2).unwrap() <= 1e-12);
    }

    #[test]
    fn spmm_adjoint_random(seed in any::<u64>()) {
        let graph = random_graph(7, 0.4, 2, seed);
        let adj = graph.normalize();
        let x = random_matrix(7, 2, seed ^ 5);
        let g = random_matrix(7, 2, seed ^ 6);
        let gx = ops::spmm_backward(adj.csr(), &g).unwrap();
        let err = finite_diff_check(probe(&g, |x| ops::spmm(adj.csr(), x)), &x, &gx, FiniteDiff::default()).unwrap();
        prop_assert!(err <= KERNEL_TOL);
    }
}
