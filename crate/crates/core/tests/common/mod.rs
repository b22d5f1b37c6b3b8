#![allow(dead_code)]

use fedgraph_core::harness::Dataset;
use fedgraph_core::metrics::Reduction;
use fedgraph_core::model::objective;
use fedgraph_core::ops::{finite_diff_check, FiniteDiff};
use fedgraph_core::{Architecture, DenseMatrix, Graph, ModelKind, NeighborSets, ServerModel, StreamKey, Topology, UserModel};
use rand::Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = StreamKey::new(seed, "test/matrix").rng();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = StreamKey::new(seed, "test/edges").rng();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Every node labeled; even nodes train, odd nodes test.
pub fn random_graph(n: usize, p: f64, c: usize, seed: u64) -> Graph {
    let mut rng = StreamKey::new(seed, "test/labels").rng();
    let labels = (0..n).map(|_| Some(rng.random_range(0..c))).collect();
    let train = (0..n).step_by(2).collect();
    let test = (1..n).step_by(2).collect();
    Graph::new(n, random_edges(n, p, seed), labels, c, train, test).unwrap()
}

/// Random graph plus sparse nonnegative features.
pub fn random_dataset(n: usize, p: f64, d: usize, c: usize, seed: u64) -> Dataset {
    let graph = random_graph(n, p, c, seed).with_feature_dim(d);
    let mut rng = StreamKey::new(seed, "test/features").rng();
    let features = DenseMatrix::from_fn(n, d, |_, _| {
        if rng.random::<f64>() < 0.6 {
            rng.random_range(0.1..1.0)
        } else {
            0.0
        }
    });
    Dataset { graph, features }
}

pub fn cora_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cora")
}

pub fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
    let d = a.max_abs_diff(b).unwrap();
    assert!(d <= tol, "max |diff| = {d:e} > {tol:e}");
}

pub struct Split {
    pub arch: Architecture,
    pub data: Dataset,
    pub topo: Topology,
    pub users: Vec<UserModel>,
    pub server: ServerModel,
}

impl Split {
    pub fn new(kind: ModelKind, heads: usize, hidden: usize, seed: u64) -> Self {
        let data = random_dataset(8, 0.35, 5, 3, seed);
        let mut arch = Architecture::new(kind, 5, 3);
        arch.heads = heads;
        arch.hidden = hidden;
        arch.dropout = 0.0;
        let users = (0..8).map(|i| UserModel::init(5, hidden, heads, seed, i, None)).collect();
        Self {
            topo: Topology::new(&data.graph),
            server: ServerModel::init(&arch, seed),
            arch,
            data,
            users,
        }
    }

    pub fn latents(&self, users: &[UserModel]) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = users
            .iter()
            .enumerate()
            .map(|(i, u)| u.forward_eval(self.data.features.row(i), 1).unwrap().0)
            .collect();
        DenseMatrix::from_rows(&rows).unwrap()
    }

    pub fn loss(&self, users: &[UserModel], server: &ServerModel, lambda: f64) -> f64 {
        let x = self.latents(users);
        let (logits, _) = server.forward(&self.topo, &x, None).unwrap();
        objective(&logits, &x, &self.data.graph, &self.topo.neighbors, self.arch.hidden, lambda, Reduction::Sum)
            .unwrap()
            .total
    }

    /// Analytic gradients: per user per head, then server tensors, then latents.
    pub fn grads(&self, lambda: f64) -> (Vec<Vec<DenseMatrix>>, Vec<DenseMatrix>, DenseMatrix) {
        let x = self.latents(&self.users);
        let (logits, cache) = self.server.forward(&self.topo, &x, None).unwrap();
        let obj = objective(&logits, &x, &self.data.graph, &self.topo.neighbors, self.arch.hidden, lambda, Reduction::Sum)
            .unwrap();
        let sg = self.server.backward(&self.topo, &cache, &obj.grad_logits).unwrap();
        let mut g_lat = sg.latents;
        if let Some(r) = &obj.grad_latents_reg {
            g_lat.axpy(1.0, r).unwrap();
        }
        let user = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let (_, ctx) = u.forward_eval(self.data.features.row(i), 1).unwrap();
                u.backward(&ctx, g_lat.row(i), 1).unwrap()
            })
            .collect();
        (user, sg.params, g_lat)
    }

    pub fn check_all(&self, lambda: f64) -> f64 {
        let (gu, gs, g_lat) = self.grads(lambda);
        let opts = FiniteDiff {
            max_coords: 128,
            ..FiniteDiff::default()
        };
        let mut worst: f64 = 0.0;
        for (i, heads) in gu.iter().enumerate() {
            for (l, g) in heads.iter().enumerate() {
                let f = |w: &DenseMatrix| {
                    let mut users = self.users.clone();
                    users[i].heads_mut()[l] = w.clone();
                    Ok(self.loss(&users, &self.server, lambda))
                };
                worst = worst.max(finite_diff_check(f, &self.users[i].heads()[l], g, opts).unwrap());
            }
        }
        for (k, g) in gs.iter().enumerate() {
            let f = |p: &DenseMatrix| {
                let mut server = self.server.clone();
                *server.params_mut()[k] = p.clone();
                Ok(self.loss(&self.users, &server, lambda))
            };
            worst = worst.max(finite_diff_check(f, self.server.params()[k], g, opts).unwrap());
        }
        // The gradient each client receives is ∂L/∂x̄_i.
        let x = self.latents(&self.users);
        let f = |z: &DenseMatrix| {
            let (logits, _) = self.server.forward(&self.topo, z, None)?;
            Ok(objective(&logits, z, &self.data.graph, &self.topo.neighbors, self.arch.hidden, lambda, Reduction::Sum)?.total)
        };
        worst.max(finite_diff_check(f, &x, &g_lat, opts).unwrap())
    }
}

/// Per-node aggregation `h_i = Σ_{j ∈ N_i} x_j / sqrt(|N_i| |N_j|)` by explicit loops.
pub fn aggregate_loop(nb: &NeighborSets, x: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for &j in nb.get(i) {
            let w = 1.0 / ((nb.degree(i) * nb.degree(j)) as f64).sqrt();
            for c in 0..x.cols() {
                out.row_mut(i)[c] += w * x.row(j)[c];
            }
        }
    }
    out
}

/// Single-head attention `Σ_j softmax_j(leaky(a_srcᵀz_i + a_dstᵀz_j)) z_j` by explicit loops.
pub fn attend_loop(nb: &NeighborSets, z: &DenseMatrix, a: &[f64]) -> DenseMatrix {
    let k = z.cols();
    let score = |i: usize, j: usize| {
        let s: f64 = (0..k).map(|c| a[c] * z.row(i)[c] + a[k + c] * z.row(j)[c]).sum();
        if s > 0.0 {
            s
        } else {
            0.2 * s
        }
    };
    let mut out = DenseMatrix::zeros(z.rows(), k);
    for i in 0..z.rows() {
        let m = nb.get(i).iter().map(|&j| score(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let den: f64 = nb.get(i).iter().map(|&j| (score(i, j) - m).exp()).sum();
        for &j in nb.get(i) {
            let alpha = (score(i, j) - m).exp() / den;
            for c in 0..k {
                out.row_mut(i)[c] += alpha * z.row(j)[c];
            }
        }
    }
    out
}
