//! Shared-weight reference model. It sees the whole feature matrix, so it
//! only serves as an oracle and as the centralized baseline.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{check_divergence, RoundMetrics};
use crate::model::init::glorot_matrix;
use crate::model::{accuracy, objective, Architecture, ServerCache, ServerModel, Topology, TrainParams, INPUT_DROPOUT};
use crate::ops::{self, DropoutMask};
use crate::optim::{adam_step_matrix, AdamConfig, AdamState};
use crate::rng::{RoundStreams, StreamKey};

/// First-layer heads shared by every node, plus the server half.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedModel {
    pub heads: Vec<DenseMatrix>,
    pub server: ServerModel,
}

#[derive(Debug, Clone)]
pub struct CentralCache {
    dropped: DenseMatrix,
    pub latents: DenseMatrix,
    server: ServerCache,
}

/// Gradients in parameter order: first-layer heads, then server tensors.
#[derive(Debug, Clone)]
pub struct CentralGrads {
    pub heads: Vec<DenseMatrix>,
    pub server: Vec<DenseMatrix>,
}

impl CentralizedModel {
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let heads = (0..arch.heads)
            .map(|l| {
                glorot_matrix(
                    arch.input_dim,
                    arch.hidden,
                    StreamKey::new(seed, &format!("init/central/head{l}")),
                )
            })
            .collect();
        Self {
            heads,
            server: ServerModel::init(arch, seed),
        }
    }

    /// Input dropout uses the per-node streams of the split clients, so a
    /// tied split model sees the same masks.
    pub fn forward(
        &self,
        topo: &Topology,
        features: &DenseMatrix,
        dropout: f64,
        train: Option<RoundStreams>,
    ) -> Result<(DenseMatrix, CentralCache)> {
        let d = self.heads.first().map_or(0, DenseMatrix::rows);
        if features.cols() != d || features.rows() != topo.num_nodes() {
            return Err(Error::shape(
                "CentralizedModel::forward",
                format!(
                    "features {}x{}, expected {}x{d}",
                    features.rows(),
                    features.cols(),
                    topo.num_nodes()
                ),
            ));
        }
        let dropped = match train {
            Some(s) => {
                let mut out = features.clone();
                for i in 0..out.rows() {
                    let mask = DropoutMask::sample(d, dropout, &mut s.rng(INPUT_DROPOUT, i as u64))?;
                    let row = mask.apply_slice(features.row(i));
                    out.row_mut(i).copy_from_slice(&row);
                }
                out
            }
            None => features.clone(),
        };
        let blocks = self
            .heads
            .iter()
            .map(|w| ops::matmul(&dropped, w))
            .collect::<Result<Vec<_>>>()?;
        let latents = ops::concat_cols(&blocks.iter().collect::<Vec<_>>())?;
        let (logits, server) = self.server.forward(topo, &latents, train)?;
        Ok((
            logits,
            CentralCache {
                dropped,
                latents,
                server,
            },
        ))
    }

    /// `grad_latents_extra` is added to the latent gradient before it flows
    /// into the first layer (the regularizer term).
    pub fn backward(
        &self,
        topo: &Topology,
        cache: &CentralCache,
        grad_logits: &DenseMatrix,
        grad_latents_extra: Option<&DenseMatrix>,
    ) -> Result<CentralGrads> {
        let sg = self.server.backward(topo, &cache.server, grad_logits)?;
        let mut g_lat = sg.latents;
        if let Some(extra) = grad_latents_extra {
            g_lat.axpy(1.0, extra)?;
        }
        let hd = self.heads[0].cols();
        let parts = ops::concat_cols_backward(&g_lat, &vec![hd; self.heads.len()])?;
        let heads = parts
            .iter()
            .map(|g| ops::matmul_tn(&cache.dropped, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(CentralGrads {
            heads,
            server: sg.params,
        })
    }
}

/// Full-batch training of the shared-weight model, evaluated on the test
/// mask after every epoch.
pub fn train_centralized(
    arch: &Architecture,
    graph: &Graph,
    features: &DenseMatrix,
    params: &TrainParams,
) -> Result<(CentralizedModel, Vec<RoundMetrics>)> {
    arch.validate()?;
    let topo = Topology::new(graph);
    let mut model = CentralizedModel::init(arch, params.seed);
    let cfg = AdamConfig::new(params.lr, params.weight_decay);
    let mut head_states: Vec<AdamState> = model.heads.iter().map(AdamState::for_param).collect();
    let mut server_states: Vec<AdamState> = model.server.params().into_iter().map(AdamState::for_param).collect();
    let mut history = Vec::with_capacity(params.rounds as usize);
    for round in 1..=params.rounds {
        let streams = RoundStreams::new(params.seed, round);
        let (logits, cache) = model.forward(&topo, features, arch.dropout, Some(streams))?;
        let obj = objective(
            &logits,
            &cache.latents,
            graph,
            &topo.neighbors,
            arch.hidden,
            params.lambda,
            params.reduction,
        )?;
        check_divergence(round, obj.total)?;
        let grads = model.backward(&topo, &cache, &obj.grad_logits, obj.grad_latents_reg.as_ref())?;
        for ((p, g), s) in model.heads.iter_mut().zip(&grads.heads).zip(&mut head_states) {
            adam_step_matrix(p, g, s, &cfg)?;
        }
        for ((p, g), s) in model.server.params_mut().into_iter().zip(&grads.server).zip(&mut server_states) {
            adam_step_matrix(p, g, s, &cfg)?;
        }
        let (eval, _) = model.forward(&topo, features, arch.dropout, None)?;
        history.push(RoundMetrics {
            round,
            train_ce: obj.ce,
            train_reg: obj.reg,
            train_total: obj.total,
            test_acc: accuracy(&eval, graph.labels(), graph.test_mask()),
        });
    }
    Ok((model, history))
}
