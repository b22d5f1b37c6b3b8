use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::NeighborSets;
use crate::model::init::{glorot_matrix, glorot_uniform};
use crate::model::{ATTENTION_SLOPE, ATTN1_DROPOUT, ATTN2_DROPOUT, HIDDEN_DROPOUT};
use crate::ops::{self, elu_grad, elu_scalar, leaky, leaky_grad, DropoutMask};
use crate::rng::{RoundStreams, StreamKey};

/// Saved state of one attention aggregation, indexed like the flattened
/// neighbor lists (`nb.offset(i) + k` for the `k`-th neighbor of `i`).
#[derive(Debug, Clone)]
pub struct Attention {
    pre: Vec<f64>,
    alpha: Vec<f64>,
    mask: Option<DropoutMask>,
}

impl Attention {
    /// Softmax coefficients before attention dropout.
    pub fn coefficients(&self) -> &[f64] {
        &self.alpha
    }
}

fn check_attention(z: &DenseMatrix, a: &[f64], nb: &NeighborSets) -> Result<()> {
    if z.rows() != nb.num_nodes() {
        return Err(Error::shape(
            "attention",
            format!("{} rows for {} nodes", z.rows(), nb.num_nodes()),
        ));
    }
    if a.len() != 2 * z.cols() {
        return Err(Error::shape(
            "attention",
            format!("attention vector of {} for features of {}", a.len(), z.cols()),
        ));
    }
    Ok(())
}

/// `h_i = Σ_{j ∈ N_i} α̃_ij z_j` with `α_i· = softmax_j(leaky_relu(a_srcᵀ z_i + a_dstᵀ z_j))`
/// and `α̃ = dropout(α)` when `drop` is given.
pub fn attention(
    z: &DenseMatrix,
    a: &[f64],
    nb: &NeighborSets,
    slope: f64,
    drop: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<(DenseMatrix, Attention)> {
    check_attention(z, a, nb)?;
    let k = z.cols();
    let (a_src, a_dst) = a.split_at(k);
    let proj = |v: &[f64], w: &[f64]| v.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
    let src: Vec<f64> = z.iter_rows().map(|r| proj(r, a_src)).collect();
    let dst: Vec<f64> = z.iter_rows().map(|r| proj(r, a_dst)).collect();

    let mut pre = Vec::with_capacity(nb.total());
    let mut alpha = Vec::with_capacity(nb.total());
    for (i, js) in nb.iter().enumerate() {
        let start = alpha.len();
        for &j in js {
            let u = src[i] + dst[j];
            pre.push(u);
            alpha.push(leaky(u, slope));
        }
        ops::softmax_in_place(&mut alpha[start..]);
    }
    let mask = match drop {
        Some((rate, rng)) if rate > 0.0 => Some(DropoutMask::sample(alpha.len(), rate, rng)?),
        Some((rate, _)) => {
            ops::check_rate(rate)?;
            None
        }
        None => None,
    };

    let mut out = DenseMatrix::zeros(z.rows(), k);
    for (i, js) in nb.iter().enumerate() {
        let base = nb.offset(i);
        let dst_row = out.row_mut(i);
        for (t, &j) in js.iter().enumerate() {
            let w = alpha[base + t] * mask.as_ref().map_or(1.0, |m| m.scales()[base + t]);
            if w != 0.0 {
                for (d, s) in dst_row.iter_mut().zip(z.row(j)) {
                    *d += w * s;
                }
            }
        }
    }
    out.ensure_finite("attention")?;
    Ok((out, Attention { pre, alpha, mask }))
}

/// Adjoint of [`attention`]: returns `(∂L/∂z, ∂L/∂a)`.
pub fn attention_backward(
    z: &DenseMatrix,
    a: &[f64],
    nb: &NeighborSets,
    slope: f64,
    cache: &Attention,
    grad: &DenseMatrix,
) -> Result<(DenseMatrix, Vec<f64>)> {
    check_attention(z, a, nb)?;
    z.check_same_shape("attention_backward", grad)?;
    if cache.alpha.len() != nb.total() {
        return Err(Error::MissingContext("attention cache for a different graph"));
    }
    let k = z.cols();
    let (a_src, a_dst) = a.split_at(k);
    let n = z.rows();
    let mut gz = DenseMatrix::zeros(n, k);
    let mut g_src = vec![0.0; n];
    let mut g_dst = vec![0.0; n];
    let mut g_alpha = Vec::new();

    for (i, js) in nb.iter().enumerate() {
        let base = nb.offset(i);
        let gh = grad.row(i);
        g_alpha.clear();
        for (t, &j) in js.iter().enumerate() {
            let scale = cache.mask.as_ref().map_or(1.0, |m| m.scales()[base + t]);
            let dot: f64 = gh.iter().zip(z.row(j)).map(|(x, y)| x * y).sum();
            g_alpha.push(dot * scale);
            let w = cache.alpha[base + t] * scale;
            if w != 0.0 {
                for (d, g) in gz.row_mut(j).iter_mut().zip(gh) {
                    *d += w * g;
                }
            }
        }
        let alpha = &cache.alpha[base..base + js.len()];
        let mean: f64 = alpha.iter().zip(&g_alpha).map(|(p, g)| p * g).sum();
        for (t, &j) in js.iter().enumerate() {
            let ge = alpha[t] * (g_alpha[t] - mean);
            let gu = ge * leaky_grad(cache.pre[base + t], slope);
            g_src[i] += gu;
            g_dst[j] += gu;
        }
    }

    let mut ga = vec![0.0; 2 * k];
    for i in 0..n {
        let zi = z.row(i);
        for c in 0..k {
            ga[c] += g_src[i] * zi[c];
            ga[k + c] += g_dst[i] * zi[c];
        }
        let (gs, gt) = (g_src[i], g_dst[i]);
        for ((d, s), t) in gz.row_mut(i).iter_mut().zip(a_src).zip(a_dst) {
            *d += gs * s + gt * t;
        }
    }
    Ok((gz, ga))
}

/// Server half of the split GAT.
///
/// Layer 1 attends per head over the uploaded head latents and concatenates
/// `ELU` outputs. Layer 2 applies feature dropout, a shared `W2` and one
/// attention head, producing logits with no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerGat {
    /// One row `[a_src ∥ a_dst]` per head.
    pub attn1: DenseMatrix,
    pub w2: DenseMatrix,
    /// `1 × 2c`.
    pub attn2: DenseMatrix,
    dropout: f64,
}

#[derive(Debug, Clone)]
pub struct GatCache {
    heads: Vec<DenseMatrix>,
    attn1: Vec<Attention>,
    pre1: DenseMatrix,
    dropped: DenseMatrix,
    feat_mask: Option<DropoutMask>,
    z2: DenseMatrix,
    attn2: Attention,
}

#[derive(Debug, Clone)]
pub struct GatGrads {
    pub attn1: DenseMatrix,
    pub w2: DenseMatrix,
    pub attn2: DenseMatrix,
    pub latents: DenseMatrix,
}

impl ServerGat {
    pub fn new(attn1: DenseMatrix, w2: DenseMatrix, attn2: DenseMatrix, dropout: f64) -> Result<Self> {
        ops::check_rate(dropout)?;
        let heads = attn1.rows();
        let hd = attn1.cols() / 2;
        if attn1.cols() % 2 != 0 || w2.rows() != heads * hd || attn2.shape() != (1, 2 * w2.cols()) {
            return Err(Error::shape(
                "ServerGat::new",
                format!(
                    "attn1 {:?}, w2 {:?}, attn2 {:?}",
                    attn1.shape(),
                    w2.shape(),
                    attn2.shape()
                ),
            ));
        }
        Ok(Self {
            attn1,
            w2,
            attn2,
            dropout,
        })
    }

    pub fn init(heads: usize, head_dim: usize, classes: usize, dropout: f64, seed: u64) -> Self {
        Self {
            attn1: glorot_uniform(
                heads,
                2 * head_dim,
                head_dim,
                1,
                StreamKey::new(seed, "init/server/attn1"),
            ),
            w2: glorot_matrix(heads * head_dim, classes, StreamKey::new(seed, "init/server/w2")),
            attn2: glorot_uniform(1, 2 * classes, classes, 1, StreamKey::new(seed, "init/server/attn2")),
            dropout,
        }
    }

    pub fn heads(&self) -> usize {
        self.attn1.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.attn1.cols() / 2
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn forward(
        &self,
        nb: &NeighborSets,
        latents: &DenseMatrix,
        train: Option<RoundStreams>,
    ) -> Result<(DenseMatrix, GatCache)> {
        let (l, hd) = (self.heads(), self.head_dim());
        if latents.cols() != l * hd {
            return Err(Error::shape(
                "ServerGat::forward",
                format!("latents are {} wide, expected {l} heads of {hd}", latents.cols()),
            ));
        }
        let heads = ops::concat_cols_backward(latents, &vec![hd; l])?;
        let mut outs = Vec::with_capacity(l);
        let mut attn1 = Vec::with_capacity(l);
        for (h, z) in heads.iter().enumerate() {
            let mut rng = train.map(|s| s.rng(ATTN1_DROPOUT, h as u64));
            let drop = rng.as_mut().map(|r| (self.dropout, r));
            let (out, cache) = attention(z, self.attn1.row(h), nb, ATTENTION_SLOPE, drop)?;
            outs.push(out);
            attn1.push(cache);
        }
        let pre1 = ops::concat_cols(&outs.iter().collect::<Vec<_>>())?;
        let act = pre1.map(elu_scalar);
        let (dropped, feat_mask) = match train {
            Some(s) => ops::dropout(&act, self.dropout, &mut s.rng(HIDDEN_DROPOUT, 0), true)?,
            None => (act, None),
        };
        let z2 = ops::matmul(&dropped, &self.w2)?;
        let mut rng = train.map(|s| s.rng(ATTN2_DROPOUT, 0));
        let drop = rng.as_mut().map(|r| (self.dropout, r));
        let (logits, attn2) = attention(&z2, self.attn2.row(0), nb, ATTENTION_SLOPE, drop)?;
        Ok((
            logits,
            GatCache {
                heads,
                attn1,
                pre1,
                dropped,
                feat_mask,
                z2,
                attn2,
            },
        ))
    }

    pub fn backward(&self, nb: &NeighborSets, cache: &GatCache, grad: &DenseMatrix) -> Result<GatGrads> {
        let (gz2, ga2) = attention_backward(&cache.z2, self.attn2.row(0), nb, ATTENTION_SLOPE, &cache.attn2, grad)?;
        let (g_dropped, g_w2) = ops::matmul_backward(&cache.dropped, &self.w2, &gz2)?;
        let g_act = ops::dropout_backward(cache.feat_mask.as_ref(), &g_dropped)?;
        let g_pre = DenseMatrix::from_vec(
            g_act.rows(),
            g_act.cols(),
            g_act
                .as_slice()
                .iter()
                .zip(cache.pre1.as_slice())
                .map(|(g, &p)| g * elu_grad(p))
                .collect(),
        )?;
        let hd = self.head_dim();
        let g_heads = ops::concat_cols_backward(&g_pre, &vec![hd; self.heads()])?;
        let mut g_attn1 = DenseMatrix::zeros(self.heads(), 2 * hd);
        let mut g_latents = Vec::with_capacity(self.heads());
        for (h, gh) in g_heads.iter().enumerate() {
            let (gz, ga) = attention_backward(
                &cache.heads[h],
                self.attn1.row(h),
                nb,
                ATTENTION_SLOPE,
                &cache.attn1[h],
                gh,
            )?;
            g_attn1.row_mut(h).copy_from_slice(&ga);
            g_latents.push(gz);
        }
        Ok(GatGrads {
            attn1: g_attn1,
            w2: g_w2,
            attn2: DenseMatrix::from_vec(1, ga2.len(), ga2)?,
            latents: ops::concat_cols(&g_latents.iter().collect::<Vec<_>>())?,
        })
    }
}
