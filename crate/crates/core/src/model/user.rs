//! User-side encoder: one or more `d × F'` linear maps applied to the
//! client's (dropped-out) private feature vector.

use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::init::{glorot_matrix, glorot_rows};
use crate::ops::DropoutMask;
use crate::rng::StreamKey;

/// Per-client linear encoder with `L` heads (`L = 1` for GCN).
///
/// With a row support, only the listed input rows of each head are stored.
/// Rows outside the support of `x_i` multiply zero in every forward pass and
/// receive zero data gradient, so dropping them changes no latent, loss or
/// gradient message; it only skips their (unobservable) weight-decay drift.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    input_dim: usize,
    head_dim: usize,
    support: Option<Vec<usize>>,
    heads: Vec<DenseMatrix>,
}

/// What the backward pass needs from a forward pass: the dropped input,
/// kept as `(stored row, value)` pairs for its nonzeros.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    round: u32,
    dropped: Vec<(usize, f64)>,
}

impl UserContext {
    pub fn round(&self) -> u32 {
        self.round
    }
}

impl UserModel {
    /// Full-row model from explicit head matrices (each `d × F'`).
    pub fn from_heads(heads: Vec<DenseMatrix>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::shape("UserModel::from_heads", "no heads"))?;
        let (d, h) = first.shape();
        if let Some(bad) = heads.iter().find(|w| w.shape() != (d, h)) {
            return Err(Error::shape(
                "UserModel::from_heads",
                format!("head is {}x{}, expected {d}x{h}", bad.rows(), bad.cols()),
            ));
        }
        Ok(Self {
            input_dim: d,
            head_dim: h,
            support: None,
            heads,
        })
    }

    /// Glorot-initialized model for client `node`.
    ///
    /// Streams are keyed by `(seed, node, head)`, so the stored rows hold the
    /// same values whether or not a row support is used.
    pub fn init(
        input_dim: usize,
        head_dim: usize,
        num_heads: usize,
        seed: u64,
        node: usize,
        support: Option<Vec<usize>>,
    ) -> Self {
        let heads = (0..num_heads)
            .map(|l| {
                let key = StreamKey::new(seed, &format!("init/user/head{l}")).entity(node as u64);
                match &support {
                    Some(rows) => glorot_rows(input_dim, head_dim, rows, key),
                    None => glorot_matrix(input_dim, head_dim, key),
                }
            })
            .collect();
        Self {
            input_dim,
            head_dim,
            support,
            heads,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// Width of the uploaded latent: `L · F'`.
    pub fn latent_dim(&self) -> usize {
        self.heads.len() * self.head_dim
    }

    /// Declared parameter count `L · d · F'`, independent of row support.
    pub fn num_params(&self) -> usize {
        self.heads.len() * self.input_dim * self.head_dim
    }

    pub fn is_compact(&self) -> bool {
        self.support.is_some()
    }

    pub fn support(&self) -> Option<&[usize]> {
        self.support.as_deref()
    }

    pub fn heads(&self) -> &[DenseMatrix] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.heads
    }

    /// Training-mode forward: input dropout from `rng`, then every head.
    pub fn forward_train(
        &self,
        x: &[f64],
        rate: f64,
        rng: &mut impl Rng,
        round: u32,
    ) -> Result<(Vec<f64>, UserContext)> {
        self.check_input(x)?;
        let mask = DropoutMask::sample(x.len(), rate, rng)?;
        let dropped = self.gather(x, Some(&mask))?;
        Ok((self.project(&dropped), UserContext { round, dropped }))
    }

    /// Evaluation-mode forward (no dropout).
    pub fn forward_eval(&self, x: &[f64], round: u32) -> Result<(Vec<f64>, UserContext)> {
        self.check_input(x)?;
        let dropped = self.gather(x, None)?;
        Ok((self.project(&dropped), UserContext { round, dropped }))
    }

    /// Per-head weight gradients `x̃ᵀ ⊗ g_l` for the latent gradient `g`.
    pub fn backward(&self, ctx: &UserContext, grad: &[f64], round: u32) -> Result<Vec<DenseMatrix>> {
        if ctx.round != round {
            return Err(Error::StaleContext {
                saved: ctx.round,
                current: round,
            });
        }
        if grad.len() != self.latent_dim() {
            return Err(Error::shape(
                "UserModel::backward",
                format!("gradient of {} for latent of {}", grad.len(), self.latent_dim()),
            ));
        }
        let stored = self.heads[0].rows();
        Ok((0..self.heads.len())
            .map(|l| {
                let g = &grad[l * self.head_dim..(l + 1) * self.head_dim];
                let mut out = DenseMatrix::zeros(stored, self.head_dim);
                for &(slot, v) in &ctx.dropped {
                    for (o, gj) in out.row_mut(slot).iter_mut().zip(g) {
                        *o = v * gj;
                    }
                }
                out
            })
            .collect())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(
                "UserModel::forward",
                format!("feature vector of {} for input dim {}", x.len(), self.input_dim),
            ));
        }
        Ok(())
    }

    fn gather(&self, x: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<(usize, f64)>> {
        let scale = |k: usize| mask.map_or(1.0, |m| m.scales()[k]);
        match &self.support {
            None => Ok(x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(k, &v)| (k, v * scale(k)))
                .filter(|&(_, v)| v != 0.0)
                .collect()),
            Some(rows) => {
                let mut out = Vec::new();
                let mut slot = 0;
                for (k, &v) in x.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    while slot < rows.len() && rows[slot] < k {
                        slot += 1;
                    }
                    if slot == rows.len() || rows[slot] != k {
                        return Err(Error::shape(
                            "UserModel::forward",
                            format!("feature {k} is nonzero but outside the stored rows"),
                        ));
                    }
                    let d = v * scale(k);
                    if d != 0.0 {
                        out.push((slot, d));
                    }
                }
                Ok(out)
            }
        }
    }

    fn project(&self, dropped: &[(usize, f64)]) -> Vec<f64> {
        let mut latent = vec![0.0; self.latent_dim()];
        for (l, w) in self.heads.iter().enumerate() {
            let dst = &mut latent[l * self.head_dim..(l + 1) * self.head_dim];
            for &(slot, v) in dropped {
                for (d, wj) in dst.iter_mut().zip(w.row(slot)) {
                    *d += v * wj;
                }
            }
        }
        latent
    }
}

/// Indices of the nonzero entries of `x`.
pub fn feature_support(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(k, _)| k)
        .collect()
}
