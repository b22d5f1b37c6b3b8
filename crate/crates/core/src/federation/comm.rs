//! Communication metering.
//!
//! Sizes assume 32-bit scalars on the wire and count payloads only (no
//! message headers). `MiB` is 2²⁰ bytes.

use serde::{Deserialize, Serialize};

use crate::federation::{Mode, RoundTranscript};
use crate::model::Architecture;

pub const MIB: f64 = (1u64 << 20) as f64;

/// Bytes moved over a whole run.
///
/// `table1_MiB` is the upload-direction figure used for cross-method
/// comparison: latents only for `nfedgnn`, latents plus user-model
/// parameters for `cnfgnn`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub mode: Mode,
    pub model: String,
    pub n: usize,
    pub latent_dim: usize,
    pub params_per_user: usize,
    pub rounds: u32,
    pub upload_MiB: f64,
    pub download_MiB: f64,
    pub table1_MiB: f64,
}

impl CommReport {
    pub fn total_mib(&self) -> f64 {
        self.upload_MiB + self.download_MiB
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ByteTotals {
    pub upload: u64,
    pub download: u64,
}

/// Closed-form byte totals for `rounds` rounds with `n` clients.
///
/// Per round and client: one latent up and one latent gradient down; the
/// `cnfgnn` baseline also uploads its user model and receives the average.
pub fn closed_form_bytes(mode: Mode, arch: &Architecture, n: usize, rounds: u32) -> ByteTotals {
    let per_scalar = 4 * n as u64 * u64::from(rounds);
    let h = arch.latent_dim() as u64;
    let p = arch.user_params() as u64;
    match mode {
        Mode::Nfedgnn => ByteTotals {
            upload: per_scalar * h,
            download: per_scalar * h,
        },
        Mode::Cnfgnn => ByteTotals {
            upload: per_scalar * (h + p),
            download: per_scalar * (h + p),
        },
        Mode::Centralized => ByteTotals::default(),
    }
}

/// Metering report. With transcripts the directional totals are summed
/// from the recorded messages; without, they come from the closed form.
pub fn comm_cost_report(
    mode: Mode,
    arch: &Architecture,
    n: usize,
    rounds: u32,
    transcripts: Option<&[RoundTranscript]>,
) -> CommReport {
    let totals = match transcripts {
        Some(ts) => ts.iter().fold(ByteTotals::default(), |acc, t| ByteTotals {
            upload: acc.upload + t.bytes.upload(),
            download: acc.download + t.bytes.download(),
        }),
        None => closed_form_bytes(mode, arch, n, rounds),
    };
    let table = match mode {
        Mode::Centralized => 0,
        _ => closed_form_bytes(mode, arch, n, rounds).upload,
    };
    CommReport {
        mode,
        model: arch.kind.as_str().to_string(),
        n,
        latent_dim: arch.latent_dim(),
        params_per_user: arch.user_params(),
        rounds,
        upload_MiB: totals.upload as f64 / MIB,
        download_MiB: totals.download as f64 / MIB,
        table1_MiB: table as f64 / MIB,
    }
}
