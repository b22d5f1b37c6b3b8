use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Losses are above this, or non-finite, when a run counts as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Per-round training record. Losses come from the training-mode forward
/// pass of the round; accuracy from the eval-mode pass after the updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: u32,
    pub train_ce: f64,
    pub train_reg: f64,
    pub train_total: f64,
    pub test_acc: f64,
}

pub(crate) fn check_divergence(round: u32, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { round, loss });
    }
    Ok(())
}

/// How the cross-entropy is reduced over the training mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

impl Reduction {
    pub fn factor(self, count: usize) -> f64 {
        match self {
            Self::Sum => 1.0,
            Self::Mean if count == 0 => 0.0,
            Self::Mean => 1.0 / count as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sum => "sum",
            Self::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown loss reduction {other:?}"))),
        }
    }
}
