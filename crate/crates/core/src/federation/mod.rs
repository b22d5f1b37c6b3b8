//! Round engine: clients upload latents, the server runs the rest of the
//! model and returns one latent gradient per client. The `cnfgnn` baseline
//! additionally averages user models every round.

pub mod comm;
pub mod message;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::harness::Dataset;
use crate::metrics::{check_divergence, Reduction, RoundMetrics};
use crate::model::{
    accuracy, feature_support, objective, Architecture, ServerCache, ServerModel, Topology, TrainParams, UserContext,
    UserModel, INPUT_DROPOUT,
};
use crate::optim::{adam_step_matrix, AdamConfig, AdamState};
use crate::rng::RoundStreams;

pub use comm::{comm_cost_report, CommReport};
pub use message::{Message, MessageKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nfedgnn,
    Cnfgnn,
    Centralized,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nfedgnn => "nfedgnn",
            Self::Cnfgnn => "cnfgnn",
            Self::Centralized => "centralized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nfedgnn" => Ok(Self::Nfedgnn),
            "cnfgnn" => Ok(Self::Cnfgnn),
            "centralized" => Ok(Self::Centralized),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected nfedgnn, cnfgnn or centralized)"
            ))),
        }
    }
}

/// One user. The feature vector never leaves this struct; the only outputs
/// are [`Message`]s.
#[derive(Debug, Clone)]
pub struct ClientState {
    node: usize,
    features: Vec<f64>,
    model: UserModel,
    optim: Vec<AdamState>,
    context: Option<UserContext>,
}

impl ClientState {
    pub fn new(node: usize, features: Vec<f64>, model: UserModel) -> Result<Self> {
        if features.len() != model.input_dim() {
            return Err(Error::shape(
                "ClientState::new",
                format!("{} features for input dim {}", features.len(), model.input_dim()),
            ));
        }
        let optim = model.heads().iter().map(AdamState::for_param).collect();
        Ok(Self {
            node,
            features,
            model,
            optim,
            context: None,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn model(&self) -> &UserModel {
        &self.model
    }

    pub fn optimizer_states(&self) -> &[AdamState] {
        &self.optim
    }

    /// Training-mode latent upload for `round`.
    pub fn upload_latent(&mut self, streams: RoundStreams, dropout: f64) -> Result<Message> {
        let mut rng = streams.rng(INPUT_DROPOUT, self.node as u64);
        let (z, ctx) = self.model.forward_train(&self.features, dropout, &mut rng, streams.round)?;
        self.context = Some(ctx);
        Ok(Message::latent(streams.round, self.node, z))
    }

    /// Eval-mode latent (dropout off), used for test accuracy.
    pub fn eval_latent(&self, round: u32) -> Result<Message> {
        let (z, _) = self.model.forward_eval(&self.features, round)?;
        Ok(Message::latent(round, self.node, z))
    }

    /// Back-propagates the received latent gradient and takes one Adam step.
    pub fn apply_gradient(&mut self, msg: &Message, cfg: &AdamConfig) -> Result<()> {
        let ctx = self
            .context
            .take()
            .ok_or(Error::MissingContext("client gradient before latent upload"))?;
        msg.expect(MessageKind::Grad, ctx.round(), self.model.latent_dim())?;
        let grads = self.model.backward(&ctx, msg.payload(), msg.round())?;
        for ((w, g), s) in self.model.heads_mut().iter_mut().zip(&grads).zip(&mut self.optim) {
            adam_step_matrix(w, g, s, cfg)?;
        }
        Ok(())
    }

    pub fn upload_params(&self, round: u32) -> Result<Message> {
        Message::params(round, self.node, &self.model)
    }

    /// Replaces the user model with broadcast parameters. Optimizer state is kept.
    pub fn load_params(&mut self, msg: &Message) -> Result<()> {
        msg.expect(MessageKind::Params, msg.round(), self.model.num_params())?;
        load_flat(&mut self.model, msg.payload())
    }
}

fn load_flat(model: &mut UserModel, flat: &[f64]) -> Result<()> {
    if model.is_compact() || flat.len() != model.num_params() {
        return Err(Error::shape(
            "load_params",
            format!("{} values for {} parameters", flat.len(), model.num_params()),
        ));
    }
    let per = model.num_params() / model.num_heads();
    for (w, chunk) in model.heads_mut().iter_mut().zip(flat.chunks_exact(per)) {
        w.as_mut_slice().copy_from_slice(chunk);
    }
    Ok(())
}

/// Running elementwise mean of flattened user models, summed in node order.
struct ParamAverage {
    sum: Vec<f64>,
    count: usize,
}

impl ParamAverage {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            count: 0,
        }
    }

    fn add(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.sum.len() {
            return Err(Error::shape(
                "fedavg",
                format!("model of {} parameters, expected {}", flat.len(), self.sum.len()),
            ));
        }
        for (s, v) in self.sum.iter_mut().zip(flat) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    fn finish(mut self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter_mut().for_each(|s| *s /= n);
        self.sum
    }
}

/// Uniform mean of all user models; every model is replaced by the mean.
pub fn fedavg_user_models(models: &mut [UserModel]) -> Result<()> {
    let Some(first) = models.first() else {
        return Ok(());
    };
    let shape = (first.input_dim(), first.head_dim(), first.num_heads());
    let mut avg = ParamAverage::new(first.num_params());
    for m in models.iter() {
        if m.is_compact() || (m.input_dim(), m.head_dim(), m.num_heads()) != shape {
            return Err(Error::shape("fedavg_user_models", "heterogeneous user models"));
        }
        let flat: Vec<f64> = m.heads().iter().flat_map(|w| w.as_slice().iter().copied()).collect();
        avg.add(&flat)?;
    }
    let mean = avg.finish();
    for m in models.iter_mut() {
        load_flat(m, &mean)?;
    }
    Ok(())
}

/// Everything the server knows: topology, labels, masks and its own model.
#[derive(Debug, Clone)]
pub struct ServerState {
    graph: Graph,
    topo: Topology,
    model: ServerModel,
    optim: Vec<AdamState>,
    cfg: AdamConfig,
    lambda: f64,
    reduction: Reduction,
    round: u32,
    context: Option<(u32, ServerCache)>,
}

/// Losses of one server step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub ce: f64,
    pub reg: f64,
    pub total: f64,
}

impl ServerState {
    pub fn new(graph: Graph, model: ServerModel, params: &TrainParams) -> Self {
        let topo = Topology::new(&graph);
        let optim = model.params().into_iter().map(AdamState::for_param).collect();
        Self {
            graph,
            topo,
            model,
            optim,
            cfg: AdamConfig::new(params.lr, params.weight_decay),
            lambda: params.lambda,
            reduction: params.reduction,
            round: 0,
            context: None,
        }
    }

    pub fn model(&self) -> &ServerModel {
        &self.model
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// One state per tensor, in [`ServerModel::params`] order.
    pub fn optimizer_states(&self) -> &[AdamState] {
        &self.optim
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Training-mode forward on uploaded latents, then backward: computes
    /// `∂L/∂θˢ` and `∂L/∂x̄_i = ∂CE/∂x̄_i + λ·∂reg/∂x̄_i`, steps θˢ and
    /// returns one gradient message per node.
    pub fn step(&mut self, streams: RoundStreams, uploads: &[Message]) -> Result<(StepLosses, Vec<Message>)> {
        let n = self.graph.num_nodes();
        let width = self.model.latent_dim();
        let latents = message::assemble_latents(n, width, streams.round, uploads)?;
        let (logits, cache) = self.model.forward(&self.topo, &latents, Some(streams))?;
        self.context = Some((streams.round, cache));
        let obj = objective(
            &logits,
            &latents,
            &self.graph,
            &self.topo.neighbors,
            self.model.head_dim(),
            self.lambda,
            self.reduction,
        )?;
        check_divergence(streams.round, obj.total)?;
        let grads = self.backward(streams.round, &obj.grad_logits)?;
        let mut g_lat = grads.latents;
        if let Some(reg) = &obj.grad_latents_reg {
            g_lat.axpy(1.0, reg)?;
        }
        for ((p, g), s) in self.model.params_mut().into_iter().zip(&grads.params).zip(&mut self.optim) {
            adam_step_matrix(p, g, s, &self.cfg)?;
        }
        self.round = streams.round;
        let msgs = (0..n)
            .map(|i| Message::grad(streams.round, i, g_lat.row(i).to_vec()))
            .collect();
        Ok((
            StepLosses {
                ce: obj.ce,
                reg: obj.reg,
                total: obj.total,
            },
            msgs,
        ))
    }

    fn backward(&mut self, round: u32, grad_logits: &DenseMatrix) -> Result<crate::model::ServerGrads> {
        match self.context.take() {
            Some((r, cache)) if r == round => self.model.backward(&self.topo, &cache, grad_logits),
            Some((saved, _)) => Err(Error::StaleContext { saved, current: round }),
            None => Err(Error::MissingContext("server backward before forward")),
        }
    }

    /// Eval-mode test accuracy from eval latents.
    pub fn evaluate(&self, round: u32, latents: &[Message]) -> Result<f64> {
        let x = message::assemble_latents(self.graph.num_nodes(), self.model.latent_dim(), round, latents)?;
        let (logits, _) = self.model.forward(&self.topo, &x, None)?;
        Ok(accuracy(&logits, self.graph.labels(), self.graph.test_mask()))
    }
}

/// Payload bytes moved in one round, by direction and kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ByteCounts {
    pub upload_latent: u64,
    pub download_grad: u64,
    pub upload_params: u64,
    pub download_params: u64,
}

impl ByteCounts {
    pub fn upload(&self) -> u64 {
        self.upload_latent + self.upload_params
    }

    pub fn download(&self) -> u64 {
        self.download_grad + self.download_params
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTranscript {
    pub bytes: ByteCounts,
    pub metrics: RoundMetrics,
}

fn sum_bytes(msgs: &[Message]) -> u64 {
    msgs.iter().map(Message::payload_bytes).sum()
}

fn map_clients<T: Send>(
    clients: &mut [ClientState],
    parallel: bool,
    f: impl Fn(&mut ClientState) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        clients.par_iter_mut().map(f).collect()
    } else {
        clients.iter_mut().map(f).collect()
    }
}

/// Settings of one federated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FedConfig {
    pub arch: Architecture,
    pub params: TrainParams,
    pub mode: Mode,
    /// Evaluate clients on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

/// One full round for every client. `round` is 1-based.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    cfg: &FedConfig,
    round: u32,
) -> Result<RoundTranscript> {
    if cfg.mode == Mode::Centralized {
        return Err(Error::Config("centralized mode has no federated rounds".into()));
    }
    let streams = RoundStreams::new(cfg.params.seed, round);
    let dropout = cfg.arch.dropout;
    let adam = AdamConfig::new(cfg.params.lr, cfg.params.weight_decay);
    let mut bytes = ByteCounts::default();

    let uploads = map_clients(clients, cfg.parallel, |c| c.upload_latent(streams, dropout))?;
    bytes.upload_latent = sum_bytes(&uploads);

    let (losses, grads) = server.step(streams, &uploads)?;
    bytes.download_grad = sum_bytes(&grads);
    let mut grads: Vec<Option<Message>> = grads.into_iter().map(Some).collect();
    let routed = clients
        .iter()
        .map(|c| {
            grads
                .get_mut(c.node())
                .and_then(Option::take)
                .ok_or_else(|| Error::Wire(format!("no gradient for client {}", c.node())))
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.parallel {
        clients
            .par_iter_mut()
            .zip(routed.par_iter())
            .try_for_each(|(c, m)| c.apply_gradient(m, &adam))?;
    } else {
        for (c, m) in clients.iter_mut().zip(&routed) {
            c.apply_gradient(m, &adam)?;
        }
    }

    if cfg.mode == Mode::Cnfgnn {
        let len = cfg.arch.user_params();
        let mut avg = ParamAverage::new(len);
        for c in clients.iter() {
            let m = c.upload_params(round)?;
            bytes.upload_params += m.payload_bytes();
            avg.add(m.payload())?;
        }
        let mean = avg.finish();
        for c in clients.iter_mut() {
            let m = Message::broadcast(round, c.node(), mean.clone());
            bytes.download_params += m.payload_bytes();
            c.load_params(&m)?;
        }
    }

    let eval = map_clients(clients, cfg.parallel, |c| c.eval_latent(round))?;
    let test_acc = server.evaluate(round, &eval)?;
    Ok(RoundTranscript {
        bytes,
        metrics: RoundMetrics {
            round,
            train_ce: losses.ce,
            train_reg: losses.reg,
            train_total: losses.total,
            test_acc,
        },
    })
}

/// Builds the server and one client per node. In `nfedgnn` mode each client
/// stores only the weight rows its features touch.
pub fn setup(cfg: &FedConfig, data: &Dataset) -> Result<(ServerState, Vec<ClientState>)> {
    cfg.arch.validate()?;
    let seed = cfg.params.seed;
    let clients = (0..data.graph.num_nodes())
        .map(|i| {
            let x = data.features.row(i).to_vec();
            let support = (cfg.mode == Mode::Nfedgnn).then(|| feature_support(&x));
            let model = UserModel::init(cfg.arch.input_dim, cfg.arch.hidden, cfg.arch.heads, seed, i, support);
            ClientState::new(i, x, model)
        })
        .collect::<Result<Vec<_>>>()?;
    let server = ServerState::new(data.graph.clone(), ServerModel::init(&cfg.arch, seed), &cfg.params);
    Ok((server, clients))
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct FedOutcome {
    pub transcripts: Vec<RoundTranscript>,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
}

impl FedOutcome {
    pub fn history(&self) -> Vec<RoundMetrics> {
        self.transcripts.iter().map(|t| t.metrics).collect()
    }
}

pub fn train(cfg: &FedConfig, data: &Dataset) -> Result<FedOutcome> {
    if cfg.params.rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    let (mut server, mut clients) = setup(cfg, data)?;
    let mut transcripts = Vec::with_capacity(cfg.params.rounds as usize);
    for round in 1..=cfg.params.rounds {
        let t = run_round(&mut server, &mut clients, cfg, round)?;
        log::debug!(
            "round {round}: ce={:.4} reg={:.4} acc={:.4}",
            t.metrics.train_ce,
            t.metrics.train_reg,
            t.metrics.test_acc
        );
        transcripts.push(t);
    }
    Ok(FedOutcome {
        transcripts,
        server,
        clients,
    })
}
