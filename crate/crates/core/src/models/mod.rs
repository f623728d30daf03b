//! The estimation model `T = E(F(x))`, the progressive generator `G` and the
//! reconstruction strategies.
//!
//! Shapes, for `fps` samples per second and `C` latent channels:
//!
//! * `F`: observed window `(1, 2 fps)` to latent features `(C, 2 fps)`, a
//!   same-padded convolution stack.
//! * `E`: features `(C, L)` to a signal `(1, L)` for any `L`, a `1 x 1`
//!   projection.
//! * `G`: blocks `B1..B4` extend `(s2, noise)` to block features `b_t` of
//!   length `t fps` for `t` in 4, 6, 8, 10; a shared convolutional decoder
//!   `D` turns each `b_t` into latent features `g_t` of shape `(C, t fps)`.

mod checkpoint;
mod nets;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::GEN_DURATIONS;
use crate::seeds;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use nets::{
    encode, encode_var, estimate, estimate_var, generate, generate_var, generator_input, infer_s2,
    reconstruct, Generated,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub fps: u32,
    pub channels: usize,
    pub enc_layers: usize,
    pub enc_kernel: usize,
    pub dec_layers: usize,
    pub dec_kernel: usize,
    pub block_hidden: usize,
    pub noise_width: usize,
    /// Durations produced by the generator, ascending, always ending in 10.
    pub blocks: Vec<u32>,
    /// When false every ReLU is the identity (linear test configuration).
    pub activations: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fps: 30,
            channels: 8,
            enc_layers: 3,
            enc_kernel: 7,
            dec_layers: 6,
            dec_kernel: 3,
            block_hidden: 24,
            noise_width: 16,
            blocks: GEN_DURATIONS.to_vec(),
            activations: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.fps == 0 || self.channels == 0 || self.block_hidden == 0 {
            return bad("fps, channels and block_hidden must be positive");
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return bad("encoder and decoder need at least one layer");
        }
        if self.enc_kernel.is_multiple_of(2) || self.dec_kernel.is_multiple_of(2) {
            return bad("kernel widths must be odd");
        }
        if self.blocks.is_empty()
            || self.blocks.last() != Some(&10)
            || self.blocks.iter().any(|b| !GEN_DURATIONS.contains(b))
            || self.blocks.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("blocks must be an ascending subset of {4, 6, 8, 10} ending in 10");
        }
        if self.blocks[0] != 4 {
            return bad("the first block must produce 4 s");
        }
        Ok(())
    }

    pub fn s2_len(&self) -> usize {
        2 * self.fps as usize
    }

    /// Index `(t - 2) / 2` of the block producing duration `t`.
    pub fn block_index(t: u32) -> u32 {
        (t - 2) / 2
    }

    /// Every tensor name with its shape, in a fixed order.
    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let c = self.channels;
        let mut out = Vec::new();
        for l in 0..self.enc_layers {
            let cin = if l == 0 { 1 } else { c };
            out.push((format!("F.conv{l}.w"), (c, cin * self.enc_kernel)));
            out.push((format!("F.conv{l}.b"), (c, 1)));
        }
        out.push(("E.w".into(), (1, c)));
        out.push(("E.b".into(), (1, 1)));
        let mut prev = self.s2_len() + self.noise_width;
        for &t in &self.blocks {
            let bn = Self::block_index(t);
            let width = t as usize * self.fps as usize;
            out.push((format!("G.B{bn}.l0.w"), (self.block_hidden, prev)));
            out.push((format!("G.B{bn}.l0.b"), (self.block_hidden, 1)));
            out.push((format!("G.B{bn}.l1.w"), (width, self.block_hidden)));
            out.push((format!("G.B{bn}.l1.b"), (width, 1)));
            prev = width;
        }
        for l in 0..self.dec_layers {
            let cin = if l == 0 { 1 } else { c };
            out.push((format!("G.D.conv{l}.w"), (c, cin * self.dec_kernel)));
            out.push((format!("G.D.conv{l}.b"), (c, 1)));
        }
        out
    }
}

/// Model component that owns a tensor, by name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    F,
    E,
    G,
}

impl Part {
    pub fn of(name: &str) -> Part {
        match name.as_bytes().first() {
            Some(b'F') => Part::F,
            Some(b'E') => Part::E,
            _ => Part::G,
        }
    }
}

/// All model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    /// Random initialization: weights `N(0, 2 / fan_in)`, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds::rng(seed);
        let mut tensors = BTreeMap::new();
        for (name, (r, c)) in config.tensor_shapes() {
            let t = if name.ends_with(".w") {
                let normal = Normal::new(0.0, (2.0 / c as f64).sqrt()).expect("valid std");
                Tensor::new(r, c, (0..r * c).map(|_| normal.sample(&mut rng)).collect())
            } else {
                Tensor::zeros(r, c)
            };
            tensors.insert(name, t);
        }
        Ok(Self { config, tensors })
    }

    /// Every tensor set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .tensor_shapes()
            .into_iter()
            .map(|(n, (r, c))| (n, Tensor::zeros(r, c)))
            .collect();
        Ok(Self { config, tensors })
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[name]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors.get_mut(name).expect("known tensor name")
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn part_count(&self, part: Part) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| Part::of(n) == part)
            .map(|(_, t)| t.len())
            .sum()
    }

    /// SHA-256 over the names and little-endian values of one part.
    pub fn part_hash(&self, part: Part) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.tensors.iter().filter(|(n, _)| Part::of(n) == part) {
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Places every tensor on the tape; tensors for which `trainable` is true
    /// become named parameters, the rest constants.
    pub fn bind(&self, t: &mut Tape, trainable: impl Fn(Part) -> bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, v)| {
                let var = if trainable(Part::of(name)) {
                    t.param(name.clone(), v.clone())
                } else {
                    t.constant(v.clone())
                };
                (name.clone(), var)
            })
            .collect();
        Bound { vars }
    }
}

/// Model tensors placed on a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }
}

/// Reconstruction strategy. The learned strategies differ only in where the
/// 2 s training crop sits inside the 10 s record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Duplication,
    Forward,
    Backward,
    FwdBwd,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Self::Duplication,
        Self::Forward,
        Self::Backward,
        Self::FwdBwd,
    ];

    /// Start of the 2 s training crop, in seconds.
    pub fn crop_start_s(self) -> f64 {
        match self {
            Strategy::Forward | Strategy::Duplication => 0.0,
            Strategy::Backward => 8.0,
            Strategy::FwdBwd => 4.0,
        }
    }

    pub fn is_learned(self) -> bool {
        self != Strategy::Duplication
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Duplication => "duplication",
            Strategy::Forward => "forward",
            Strategy::Backward => "backward",
            Strategy::FwdBwd => "fwd-bwd",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "strategy",
                name: s.to_string(),
            })
    }
}

/// Unit Gaussian generator noise for `seed`.
pub fn noise_vector(seed: u64, width: usize) -> Vec<f64> {
    let mut rng = seeds::rng(seed);
    (0..width).map(|_| rng.sample(StandardNormal)).collect()
}
