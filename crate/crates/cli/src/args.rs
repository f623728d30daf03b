use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pgsr_core::losses::CeOrientation;
use pgsr_core::models::{ModelConfig, Strategy};
use pgsr_core::synth::CorpusSpec;
use pgsr_core::train::{TLoss, TrainConfig};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "pgsr",
    version,
    about = "Pulse-rate estimation and 10 s reconstruction from 2 s windows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Generate a synthetic corpus.
    Corpus(CorpusArgs),
    /// Compare PSD heart rates of one signal seen through 2 s and 10 s windows.
    LeakageDemo(LeakageArgs),
    /// Train T and G by alternating epochs.
    Train(TrainArgs),
    /// Score a trained checkpoint on the corpus test split.
    Eval(EvalArgs),
    /// Reconstruct 10 s from one 2 s observation.
    Reconstruct(ReconstructArgs),
    /// Run one ablation grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusOpts {
    #[arg(long, default_value_t = 200)]
    pub n_records: usize,
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    #[arg(long, default_value_t = 50.0)]
    pub hr_min: f64,
    #[arg(long, default_value_t = 110.0)]
    pub hr_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub hr_trend_bpm: f64,
    /// Noise level in dB; omit with --no-noise.
    #[arg(long, default_value_t = 10.0)]
    pub noise_snr_db: f64,
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long, default_value_t = 0.5)]
    pub drift_amplitude: f64,
    #[arg(long, default_value_t = 10.0)]
    pub drift_period_s: f64,
}

impl CorpusOpts {
    pub fn spec(&self, seed: u64) -> CorpusSpec {
        CorpusSpec {
            n_records: self.n_records,
            fps: self.fps,
            hr_range: (self.hr_min, self.hr_max),
            hr_trend_bpm: self.hr_trend_bpm,
            noise_snr_db: (!self.no_noise).then_some(self.noise_snr_db),
            drift_amplitude: self.drift_amplitude,
            drift_period_s: self.drift_period_s,
            seed,
            ..CorpusSpec::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub corpus: CorpusOpts,
}

#[derive(Debug, Args, Serialize)]
pub struct LeakageArgs {
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    #[arg(long, default_value_t = 72.0)]
    pub hr_bpm: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Duplication,
    Forward,
    Backward,
    FwdBwd,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Duplication => Strategy::Duplication,
            StrategyArg::Forward => Strategy::Forward,
            StrategyArg::Backward => Strategy::Backward,
            StrategyArg::FwdBwd => Strategy::FwdBwd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Ce,
    Wce,
    Ncc,
    Mps,
    #[value(name = "ncc+ce")]
    NccCe,
    #[value(name = "mps+wce")]
    MpsWce,
}

impl From<LossArg> for TLoss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ce => TLoss::Ce,
            LossArg::Wce => TLoss::Wce,
            LossArg::Ncc => TLoss::Ncc,
            LossArg::Mps => TLoss::Mps,
            LossArg::NccCe => TLoss::NccCe,
            LossArg::MpsWce => TLoss::MpsWce,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationArg {
    AsPrinted,
    Conventional,
}

/// Overrides for the training configuration; unset flags keep the defaults.
#[derive(Debug, Args, Serialize)]
pub struct TrainOpts {
    #[arg(long)]
    pub lr_t: Option<f64>,
    #[arg(long)]
    pub lr_g: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub delta_t_s: Option<f64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    pub ce_orientation: Option<OrientationArg>,
    #[arg(long)]
    pub anchoring: bool,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub block_hidden: Option<usize>,
}

impl TrainOpts {
    pub fn config(&self, fps: u32) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            lr_t: self.lr_t.unwrap_or(d.lr_t),
            lr_g: self.lr_g.unwrap_or(d.lr_g),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed,
            delta_t_s: self.delta_t_s.unwrap_or(d.delta_t_s),
            strategy: self.strategy.map(Into::into).unwrap_or(d.strategy),
            ce_orientation: match self.ce_orientation {
                Some(OrientationArg::Conventional) => CeOrientation::Conventional,
                Some(OrientationArg::AsPrinted) => CeOrientation::AsPrinted,
                None => d.ce_orientation,
            },
            anchoring: self.anchoring,
            loss: self.loss.map(Into::into).unwrap_or(d.loss),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            checkpoint_every: self.checkpoint_every.unwrap_or(d.checkpoint_every),
            model: ModelConfig {
                fps,
                channels: self.channels.unwrap_or(d.model.channels),
                block_hidden: self.block_hidden.unwrap_or(d.model.block_hidden),
                ..d.model
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for `model.ckpt`, `runlog.jsonl` and periodic checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint; its stored configuration wins.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with one row per test clip.
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the strategy the checkpoint was trained with.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    /// Signal CSV (`fps=<n>` header) holding a 2 s observation.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Required for the learned strategies. Without it the input itself is
    /// duplicated.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Loss,
    Strategy,
    Blocks,
    HrCalc,
    Sudden,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(value_enum)]
    pub which: Ablation,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comparison CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained model for `hr-calc` and `sudden`; trained on the spot when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOpts,
}
