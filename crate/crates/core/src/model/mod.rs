//! Split GCN and split GAT: user-side encoders, server-side halves and a
//! centralized shared-weight reference.

pub mod centralized;
pub mod gat;
pub mod gcn;
pub mod init;
pub mod user;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, NeighborSets, NormalizedAdjacency};
use crate::laplacian::{laplacian_reg_heads, laplacian_reg_heads_grad, total_loss};
use crate::metrics::Reduction;
use crate::ops::masked_softmax_cross_entropy;
use crate::rng::RoundStreams;

pub use centralized::{train_centralized, CentralizedModel};
pub use gat::{attention, attention_backward, Attention, GatCache, ServerGat};
pub use gcn::{GcnCache, ServerGcn};
pub use user::{feature_support, UserContext, UserModel};

/// Hidden width per head.
pub const HIDDEN: usize = 16;
/// Attention heads of the GAT first layer.
pub const GAT_HEADS: usize = 8;
/// Negative slope of the attention leaky-relu.
pub const ATTENTION_SLOPE: f64 = 0.2;

/// Stream purposes; shared by the split and centralized code paths so both
/// draw identical dropout masks.
pub(crate) const INPUT_DROPOUT: &str = "dropout/input";
pub(crate) const HIDDEN_DROPOUT: &str = "dropout/hidden";
pub(crate) const ATTN1_DROPOUT: &str = "dropout/attention1";
pub(crate) const ATTN2_DROPOUT: &str = "dropout/attention2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gat,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gcn => "gcn",
            Self::Gat => "gat",
        }
    }

    pub fn default_heads(self) -> usize {
        match self {
            Self::Gcn => 1,
            Self::Gat => GAT_HEADS,
        }
    }

    pub fn default_lr(self) -> f64 {
        match self {
            Self::Gcn => 0.1,
            Self::Gat => 0.01,
        }
    }

    pub fn default_dropout(self) -> f64 {
        match self {
            Self::Gcn => 0.5,
            Self::Gat => 0.6,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            other => Err(Error::Config(format!("unknown model {other:?} (expected gcn or gat)"))),
        }
    }
}

/// Architecture shape shared by both halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl Architecture {
    pub fn new(kind: ModelKind, input_dim: usize, classes: usize) -> Self {
        Self {
            kind,
            input_dim,
            hidden: HIDDEN,
            heads: kind.default_heads(),
            classes,
            dropout: kind.default_dropout(),
        }
    }

    /// Width of one uploaded latent.
    pub fn latent_dim(&self) -> usize {
        self.heads * self.hidden
    }

    /// User-side parameter count per client.
    pub fn user_params(&self) -> usize {
        self.heads * self.input_dim * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.classes == 0 || self.input_dim == 0 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        if self.kind == ModelKind::Gcn && self.heads != 1 {
            return Err(Error::Config("gcn uses a single head".into()));
        }
        crate::ops::check_rate(self.dropout)
    }
}

/// Graph structure the server needs for either model.
#[derive(Debug, Clone)]
pub struct Topology {
    pub adj: NormalizedAdjacency,
    pub neighbors: NeighborSets,
}

impl Topology {
    pub fn new(graph: &Graph) -> Self {
        Self {
            adj: graph.normalize(),
            neighbors: graph.neighbor_sets(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.num_nodes()
    }
}

/// Server half of either model.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerModel {
    Gcn(ServerGcn),
    Gat(ServerGat),
}

/// Saved forward state of [`ServerModel::forward`].
#[derive(Debug, Clone)]
pub enum ServerCache {
    Gcn(GcnCache),
    Gat(GatCache),
}

/// Gradients of one server backward pass.
#[derive(Debug, Clone)]
pub struct ServerGrads {
    /// Same order as [`ServerModel::params`].
    pub params: Vec<DenseMatrix>,
    pub latents: DenseMatrix,
}

impl ServerModel {
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        match arch.kind {
            ModelKind::Gcn => Self::Gcn(ServerGcn::init(arch.hidden, arch.classes, arch.dropout, seed)),
            ModelKind::Gat => Self::Gat(ServerGat::init(
                arch.heads,
                arch.hidden,
                arch.classes,
                arch.dropout,
                seed,
            )),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Gcn(_) => ModelKind::Gcn,
            Self::Gat(_) => ModelKind::Gat,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Self::Gcn(m) => m.hidden(),
            Self::Gat(m) => m.heads() * m.head_dim(),
        }
    }

    pub fn head_dim(&self) -> usize {
        match self {
            Self::Gcn(m) => m.hidden(),
            Self::Gat(m) => m.head_dim(),
        }
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        match self {
            Self::Gcn(m) => vec![&m.w1],
            Self::Gat(m) => vec![&m.attn1, &m.w2, &m.attn2],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        match self {
            Self::Gcn(m) => vec![&mut m.w1],
            Self::Gat(m) => vec![&mut m.attn1, &mut m.w2, &mut m.attn2],
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.rows() * p.cols()).sum()
    }

    /// Logits (pre-softmax) for every node. `train` selects training mode
    /// and the round's dropout streams.
    pub fn forward(
        &self,
        topo: &Topology,
        latents: &DenseMatrix,
        train: Option<RoundStreams>,
    ) -> Result<(DenseMatrix, ServerCache)> {
        match self {
            Self::Gcn(m) => m
                .forward(&topo.adj, latents, train)
                .map(|(z, c)| (z, ServerCache::Gcn(c))),
            Self::Gat(m) => m
                .forward(&topo.neighbors, latents, train)
                .map(|(z, c)| (z, ServerCache::Gat(c))),
        }
    }

    pub fn backward(&self, topo: &Topology, cache: &ServerCache, grad_logits: &DenseMatrix) -> Result<ServerGrads> {
        match (self, cache) {
            (Self::Gcn(m), ServerCache::Gcn(c)) => {
                let (gw1, gx) = m.backward(&topo.adj, c, grad_logits)?;
                Ok(ServerGrads {
                    params: vec![gw1],
                    latents: gx,
                })
            }
            (Self::Gat(m), ServerCache::Gat(c)) => {
                let g = m.backward(&topo.neighbors, c, grad_logits)?;
                Ok(ServerGrads {
                    params: vec![g.attn1, g.w2, g.attn2],
                    latents: g.latents,
                })
            }
            _ => Err(Error::MissingContext("server cache of a different model")),
        }
    }
}

/// Optimization settings shared by federated and centralized training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub rounds: u32,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub reduction: Reduction,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            rounds: 200,
            lr: kind.default_lr(),
            weight_decay: 5e-4,
            lambda: 0.0,
            reduction: Reduction::Sum,
            seed,
        }
    }
}

/// Training objective `CE + λ·reg` evaluated on one forward pass.
#[derive(Debug, Clone)]
pub struct Objective {
    pub ce: f64,
    pub reg: f64,
    pub total: f64,
    pub grad_logits: DenseMatrix,
    /// `λ · ∂reg/∂X̄`; `None` when `λ = 0`.
    pub grad_latents_reg: Option<DenseMatrix>,
}

/// Cross-entropy over the training mask plus the head-averaged Laplacian
/// regularizer of `latents`.
pub fn objective(
    logits: &DenseMatrix,
    latents: &DenseMatrix,
    graph: &Graph,
    neighbors: &NeighborSets,
    head_dim: usize,
    lambda: f64,
    reduction: Reduction,
) -> Result<Objective> {
    let ce = masked_softmax_cross_entropy(logits, graph.labels(), graph.train_mask())?;
    let f = reduction.factor(graph.train_mask().len());
    let reg = laplacian_reg_heads(latents, neighbors, head_dim)?;
    let grad_latents_reg = if lambda > 0.0 {
        Some(laplacian_reg_heads_grad(latents, neighbors, head_dim)?.scale(lambda))
    } else {
        None
    };
    let ce_value = ce.loss * f;
    Ok(Objective {
        ce: ce_value,
        reg,
        total: total_loss(ce_value, reg, lambda),
        grad_logits: if f == 1.0 { ce.grad } else { ce.grad.scale(f) },
        grad_latents_reg,
    })
}

/// Fraction of `mask` nodes whose argmax logit equals the label. Ties go to
/// the lowest class index. An empty mask gives 0.
pub fn accuracy(logits: &DenseMatrix, labels: &[Option<usize>], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let hits = mask
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            labels[i] == Some(best)
        })
        .count();
    hits as f64 / mask.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parses() {
        assert_eq!("GCN".parse::<ModelKind>().unwrap(), ModelKind::Gcn);
        assert_eq!("gat".parse::<ModelKind>().unwrap(), ModelKind::Gat);
        assert!("sage".parse::<ModelKind>().is_err());
    }

    #[test]
    fn gat_latent_is_128_wide() {
        let a = Architecture::new(ModelKind::Gat, 1433, 7);
        assert_eq!(a.latent_dim(), 128);
        assert_eq!(a.user_params(), 8 * 1433 * 16);
        assert_eq!(Architecture::new(ModelKind::Gcn, 1433, 7).user_params(), 1433 * 16);
    }

    #[test]
    fn accuracy_counts_argmax() {
        let z = DenseMatrix::from_rows(&[vec![0.1, 0.9], vec![0.8, 0.2], vec![0.5, 0.5]]).unwrap();
        let y = [Some(1), Some(1), Some(0)];
        assert!((accuracy(&z, &y, &[0, 1, 2]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy(&z, &y, &[]), 0.0);
    }
}
