//! Alternating optimization of `T = E(F)` and `G`, inference, evaluation and
//! the ablation runners.

mod ablate;
mod adam;
mod eval;
mod fit;
mod log;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::CeOrientation;
use crate::models::{ModelConfig, Strategy};

pub use ablate::{
    ablate_blocks, ablate_hr_calc, ablate_loss, ablate_strategy, ablate_sudden, AblationRow,
    SuddenCase, SuddenReport,
};
pub use adam::Adam;
pub use eval::{clip_starts, evaluate, infer, EvalRow, EvalSummary, Inference};
pub use fit::{alternate, entropy_weights_for, train_g, train_t, Trainer};
pub use log::{LogRecord, RunLog};

/// Loss used to train `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TLoss {
    #[serde(rename = "ce")]
    Ce,
    #[serde(rename = "wce")]
    Wce,
    #[serde(rename = "ncc")]
    Ncc,
    #[serde(rename = "mps")]
    Mps,
    #[serde(rename = "ncc+ce")]
    NccCe,
    #[serde(rename = "mps+wce")]
    MpsWce,
}

impl TLoss {
    pub const ALL: [TLoss; 6] = [
        Self::Ce,
        Self::Wce,
        Self::Ncc,
        Self::Mps,
        Self::NccCe,
        Self::MpsWce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TLoss::Ce => "ce",
            TLoss::Wce => "wce",
            TLoss::Ncc => "ncc",
            TLoss::Mps => "mps",
            TLoss::NccCe => "ncc+ce",
            TLoss::MpsWce => "mps+wce",
        }
    }

    /// (ce weight source, time-domain term) flags.
    pub(crate) fn parts(self) -> (Option<bool>, Option<bool>) {
        // first: Some(weighted) when a cross-entropy term is present
        // second: Some(true) for mps, Some(false) for ncc
        match self {
            TLoss::Ce => (Some(false), None),
            TLoss::Wce => (Some(true), None),
            TLoss::Ncc => (None, Some(false)),
            TLoss::Mps => (None, Some(true)),
            TLoss::NccCe => (Some(false), Some(false)),
            TLoss::MpsWce => (Some(true), Some(true)),
        }
    }
}

impl fmt::Display for TLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TLoss::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "loss",
                name: s.to_string(),
            })
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_t: f64,
    pub lr_g: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub delta_t_s: f64,
    pub strategy: Strategy,
    pub ce_orientation: CeOrientation,
    /// Adds `1 - NC(generated crop window, s2)` to the generator loss.
    pub anchoring: bool,
    pub loss: TLoss,
    /// Evaluate on the test split every this many epochs (0: never).
    pub eval_every: usize,
    /// Checkpoint every this many epochs (0: never).
    pub checkpoint_every: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_t: 1e-3,
            lr_g: 1e-3,
            epochs: 100,
            batch_size: 16,
            seed: 0,
            delta_t_s: 1.5,
            strategy: Strategy::FwdBwd,
            ce_orientation: CeOrientation::AsPrinted,
            anchoring: false,
            loss: TLoss::MpsWce,
            eval_every: 0,
            checkpoint_every: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The learning rates used for large video backbones (`1e-5` for `T`,
    /// `5e-5` for `G`). Far too slow for the small models here: after 100
    /// epochs on the default corpus the reconstruction is still worse than
    /// the raw 2 s estimate.
    pub fn with_backbone_rates(self) -> Self {
        Self {
            lr_t: 1e-5,
            lr_g: 5e-5,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_t >= 0.0 && self.lr_g >= 0.0)
            || !self.lr_t.is_finite()
            || !self.lr_g.is_finite()
        {
            return Err(Error::InvalidArgument(
                "learning rates must be finite and non-negative".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !self.strategy.is_learned() {
            return Err(Error::InvalidArgument(
                "duplication has nothing to train".into(),
            ));
        }
        crate::xcorr::CycleSegmentation::new(1, self.model.fps, self.delta_t_s)?;
        self.model.validate()
    }
}
