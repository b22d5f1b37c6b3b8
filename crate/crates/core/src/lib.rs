//! Node-level federated GNN training with split GCN/GAT models.

pub mod dense;
pub mod error;
pub mod federation;
pub mod graph;
pub mod harness;
pub mod laplacian;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rng;
mod textio;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::{load_graph, CsrMatrix, Graph, GraphFiles, NeighborSets, NormalizedAdjacency};
pub use metrics::{Reduction, RoundMetrics};
pub use model::{Architecture, ModelKind, ServerModel, Topology, TrainParams, UserModel};
pub use optim::{AdamConfig, AdamState};
pub use rng::{RoundStreams, StreamKey};
