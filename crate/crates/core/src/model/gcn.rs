use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::model::init::glorot_matrix;
use crate::model::HIDDEN_DROPOUT;
use crate::ops::{self, DropoutMask};
use crate::rng::{RoundStreams, StreamKey};

/// Server half of the split GCN:
/// `Z = softmax(Â · dropout(ReLU(Â · X̄)) · W1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerGcn {
    pub w1: DenseMatrix,
    dropout: f64,
}

/// Saved activations of [`ServerGcn::forward`].
#[derive(Debug, Clone)]
pub struct GcnCache {
    pre: DenseMatrix,
    dropped: DenseMatrix,
    mask: Option<DropoutMask>,
}

impl ServerGcn {
    pub fn new(w1: DenseMatrix, dropout: f64) -> Result<Self> {
        ops::check_rate(dropout)?;
        Ok(Self { w1, dropout })
    }

    pub fn init(hidden: usize, classes: usize, dropout: f64, seed: u64) -> Self {
        Self {
            w1: glorot_matrix(hidden, classes, StreamKey::new(seed, "init/server/w1")),
            dropout,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn forward(
        &self,
        adj: &NormalizedAdjacency,
        latents: &DenseMatrix,
        train: Option<RoundStreams>,
    ) -> Result<(DenseMatrix, GcnCache)> {
        if latents.cols() != self.hidden() {
            return Err(Error::shape(
                "ServerGcn::forward",
                format!("latents are {} wide, W1 expects {}", latents.cols(), self.hidden()),
            ));
        }
        let pre = ops::spmm(adj.csr(), latents)?;
        let h = ops::relu(&pre);
        let (dropped, mask) = match train {
            Some(s) => ops::dropout(&h, self.dropout, &mut s.rng(HIDDEN_DROPOUT, 0), true)?,
            None => (h, None),
        };
        // Â(HW) = (ÂH)W; the right-hand product is narrower.
        let logits = ops::spmm(adj.csr(), &ops::matmul(&dropped, &self.w1)?)?;
        Ok((logits, GcnCache { pre, dropped, mask }))
    }

    /// Returns `(∂L/∂W1, ∂L/∂X̄)` for the logit gradient `grad`.
    pub fn backward(
        &self,
        adj: &NormalizedAdjacency,
        cache: &GcnCache,
        grad: &DenseMatrix,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let g_hw = ops::spmm_backward(adj.csr(), grad)?;
        let (g_dropped, g_w1) = ops::matmul_backward(&cache.dropped, &self.w1, &g_hw)?;
        let g_h = ops::dropout_backward(cache.mask.as_ref(), &g_dropped)?;
        let g_pre = ops::relu_backward(&cache.pre, &g_h)?;
        let g_x = ops::spmm_backward(adj.csr(), &g_pre)?;
        Ok((g_w1, g_x))
    }
}
