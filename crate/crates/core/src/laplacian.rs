//! Graph Laplacian regularization on uploaded latents.
//!
//! `L_reg = (1 / Σ_i |N_i|) · Σ_i Σ_{j ∈ N_i} ‖x̄_i − x̄_j‖²`, where `N_i`
//! includes `i`. Self pairs add nothing to the sum but do count in the
//! denominator. Both ordered pairs of every edge are summed.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::NeighborSets;

/// Regularization weight. Multi-head latents are always regularized per
/// head and averaged over heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    lambda: f64,
}

impl RegConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn check_rows(latents: &DenseMatrix, nb: &NeighborSets) -> Result<()> {
    if latents.rows() != nb.num_nodes() {
        return Err(Error::shape(
            "laplacian_reg",
            format!("{} latent rows for {} nodes", latents.rows(), nb.num_nodes()),
        ));
    }
    Ok(())
}

/// Regularizer value for a single-head latent matrix.
pub fn laplacian_reg(latents: &DenseMatrix, nb: &NeighborSets) -> Result<f64> {
    check_rows(latents, nb)?;
    let mut sum = 0.0;
    for i in 0..nb.num_nodes() {
        let xi = latents.row(i);
        for &j in nb.get(i) {
            sum += xi
                .iter()
                .zip(latents.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok(sum / nb.total() as f64)
}

/// Row `i` is `(4 / Σ|N_k|) · Σ_{j ∈ N_i, j ≠ i} (x̄_i − x̄_j)`.
pub fn laplacian_reg_grad(latents: &DenseMatrix, nb: &NeighborSets) -> Result<DenseMatrix> {
    check_rows(latents, nb)?;
    let scale = 4.0 / nb.total() as f64;
    let mut grad = DenseMatrix::zeros(latents.rows(), latents.cols());
    for i in 0..nb.num_nodes() {
        let xi = latents.row(i);
        let gi = grad.row_mut(i);
        for &j in nb.get(i) {
            if j == i {
                continue;
            }
            for ((g, a), b) in gi.iter_mut().zip(xi).zip(latents.row(j)) {
                *g += a - b;
            }
        }
        for g in gi.iter_mut() {
            *g *= scale;
        }
    }
    Ok(grad)
}

/// Mean of the per-head regularizers; heads are contiguous column blocks of
/// width `head_dim`.
pub fn laplacian_reg_heads(latents: &DenseMatrix, nb: &NeighborSets, head_dim: usize) -> Result<f64> {
    let heads = split_heads(latents, head_dim)?;
    let mut total = 0.0;
    for h in &heads {
        total += laplacian_reg(h, nb)?;
    }
    Ok(total / heads.len() as f64)
}

pub fn laplacian_reg_heads_grad(
    latents: &DenseMatrix,
    nb: &NeighborSets,
    head_dim: usize,
) -> Result<DenseMatrix> {
    let heads = split_heads(latents, head_dim)?;
    let inv = 1.0 / heads.len() as f64;
    let grads = heads
        .iter()
        .map(|h| laplacian_reg_grad(h, nb).map(|g| g.scale(inv)))
        .collect::<Result<Vec<_>>>()?;
    crate::ops::concat_cols(&grads.iter().collect::<Vec<_>>())
}

fn split_heads(latents: &DenseMatrix, head_dim: usize) -> Result<Vec<DenseMatrix>> {
    if head_dim == 0 || latents.cols() % head_dim != 0 {
        return Err(Error::shape(
            "laplacian_reg_heads",
            format!("{} columns do not split into heads of {head_dim}", latents.cols()),
        ));
    }
    crate::ops::concat_cols_backward(latents, &vec![head_dim; latents.cols() / head_dim])
}

/// `L = L_CE + λ · L_reg`.
pub fn total_loss(ce: f64, reg: f64, lambda: f64) -> f64 {
    ce + lambda * reg
}
