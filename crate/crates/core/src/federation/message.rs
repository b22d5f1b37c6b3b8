//! Client/server messages.
//!
//! Wire layout, little-endian: `round:u32, node:u32, kind:u8, len:u32`,
//! then `len` f32 values. In memory the payload stays f64 so simulated
//! training is not perturbed by the wire precision; only the byte meter and
//! [`Message::encode`] use f32.
//!
//! Messages can only be built from latents, latent gradients or user-model
//! parameters; nothing in this module accepts a raw feature vector.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::UserModel;

pub const HEADER_BYTES: usize = 4 + 4 + 1 + 4;
pub const WIRE_SCALAR_BYTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Latent = 0,
    Grad = 1,
    Params = 2,
}

impl TryFrom<u8> for MessageKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Latent),
            1 => Ok(Self::Grad),
            2 => Ok(Self::Params),
            other => Err(Error::Wire(format!("unknown message kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    round: u32,
    node: u32,
    kind: MessageKind,
    payload: Vec<f64>,
}

impl Message {
    /// Upload of client `node`'s latent.
    pub(crate) fn latent(round: u32, node: usize, latent: Vec<f64>) -> Self {
        Self::new(round, node, MessageKind::Latent, latent)
    }

    /// Server-to-client gradient of the total loss w.r.t. the latent.
    pub(crate) fn grad(round: u32, node: usize, grad: Vec<f64>) -> Self {
        Self::new(round, node, MessageKind::Grad, grad)
    }

    /// User-model parameters, heads in order and rows flattened. Compact
    /// models cannot be serialized this way.
    pub(crate) fn params(round: u32, node: usize, model: &UserModel) -> Result<Self> {
        if model.is_compact() {
            return Err(Error::Wire("compact user models have no parameter message".into()));
        }
        let mut payload = Vec::with_capacity(model.num_params());
        for w in model.heads() {
            payload.extend_from_slice(w.as_slice());
        }
        Ok(Self::new(round, node, MessageKind::Params, payload))
    }

    /// Broadcast of averaged parameters.
    pub(crate) fn broadcast(round: u32, node: usize, payload: Vec<f64>) -> Self {
        Self::new(round, node, MessageKind::Params, payload)
    }

    fn new(round: u32, node: usize, kind: MessageKind, payload: Vec<f64>) -> Self {
        Self {
            round,
            node: node as u32,
            kind,
            payload,
        }
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn node(&self) -> usize {
        self.node as usize
    }

    pub fn kind(&self) -> MessageKind {
        self.kind
    }

    pub fn payload(&self) -> &[f64] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<f64> {
        self.payload
    }

    /// Metered size: payload scalars at 4 bytes each, header excluded.
    pub fn payload_bytes(&self) -> u64 {
        (self.payload.len() * WIRE_SCALAR_BYTES) as u64
    }

    /// Size of [`Message::encode`]'s output.
    pub fn wire_bytes(&self) -> usize {
        HEADER_BYTES + self.payload.len() * WIRE_SCALAR_BYTES
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.node.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        for &v in &self.payload {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Inverse of [`Message::encode`]; the payload comes back at f32 precision.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Wire(format!("{} bytes is shorter than a header", bytes.len())));
        }
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let round = u32_at(0);
        let node = u32_at(4);
        let kind = MessageKind::try_from(bytes[8])?;
        let len = u32_at(9) as usize;
        let body = &bytes[HEADER_BYTES..];
        if body.len() != len * WIRE_SCALAR_BYTES {
            return Err(Error::Wire(format!(
                "header declares {len} values but {} payload bytes follow",
                body.len()
            )));
        }
        let payload = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Ok(Self {
            round,
            node,
            kind,
            payload,
        })
    }

    pub(crate) fn expect(&self, kind: MessageKind, round: u32, len: usize) -> Result<()> {
        if self.kind != kind || self.round != round || self.payload.len() != len {
            return Err(Error::Wire(format!(
                "expected {kind:?} of {len} for round {round}, got {:?} of {} for round {}",
                self.kind,
                self.payload.len(),
                self.round
            )));
        }
        Ok(())
    }
}

/// Stacks latent messages into the `n × h` server matrix, by node id.
pub(crate) fn assemble_latents(n: usize, width: usize, round: u32, msgs: &[Message]) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(n, width);
    let mut seen = vec![false; n];
    for m in msgs {
        m.expect(MessageKind::Latent, round, width)?;
        let i = m.node();
        if i >= n {
            return Err(Error::Wire(format!("latent from unknown node {i}")));
        }
        out.row_mut(i).copy_from_slice(m.payload());
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::MissingLatent(i));
    }
    Ok(out)
}
