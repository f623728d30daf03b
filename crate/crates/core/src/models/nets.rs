use super::{noise_vector, Bound, ModelConfig, ModelParams, Strategy};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sigcore::Signal;

/// Block features and decoded latent features per generated duration.
#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub blocks: Vec<(u32, T)>,
    pub latents: Vec<(u32, T)>,
}

impl<T> Generated<T> {
    pub fn latent(&self, t: u32) -> Option<&T> {
        self.latents.iter().find(|(d, _)| *d == t).map(|(_, v)| v)
    }

    pub fn block(&self, t: u32) -> Option<&T> {
        self.blocks.iter().find(|(d, _)| *d == t).map(|(_, v)| v)
    }
}

fn act(t: &mut Tape, cfg: &ModelConfig, x: Var) -> Var {
    if cfg.activations {
        t.relu(x)
    } else {
        x
    }
}

fn conv_stack(
    t: &mut Tape,
    cfg: &ModelConfig,
    b: &Bound,
    prefix: &str,
    layers: usize,
    kernel: usize,
    x: Var,
) -> Var {
    let mut h = x;
    for l in 0..layers {
        let cols = t.im2col(h, kernel);
        let y = t.matmul(b.var(&format!("{prefix}{l}.w")), cols);
        h = t.add_col_bias(y, b.var(&format!("{prefix}{l}.b")));
        if l + 1 < layers {
            h = act(t, cfg, h);
        }
    }
    h
}

fn dense(t: &mut Tape, b: &Bound, prefix: &str, x: Var) -> Var {
    let y = t.matmul(b.var(&format!("{prefix}.w")), x);
    t.add_col_bias(y, b.var(&format!("{prefix}.b")))
}

/// `F`: `(1, L)` observation to `(C, L)` features.
pub fn encode_var(t: &mut Tape, cfg: &ModelConfig, b: &Bound, x: Var) -> Var {
    conv_stack(t, cfg, b, "F.conv", cfg.enc_layers, cfg.enc_kernel, x)
}

/// `E`: `(C, L)` features to a `(1, L)` signal.
pub fn estimate_var(t: &mut Tape, b: &Bound, f: Var) -> Var {
    let y = t.matmul(b.var("E.w"), f);
    t.add_col_bias(y, b.var("E.b"))
}

/// `G`: block chain from `concat(s2, noise)` followed by the decoder.
pub fn generate_var(
    t: &mut Tape,
    cfg: &ModelConfig,
    b: &Bound,
    s2: Var,
    noise: Var,
) -> Generated<Var> {
    let mut input = t.concat(&[s2, noise]);
    let mut out = Generated {
        blocks: Vec::new(),
        latents: Vec::new(),
    };
    for &dur in &cfg.blocks {
        let prefix = format!("G.B{}", ModelConfig::block_index(dur));
        let h = dense(t, b, &format!("{prefix}.l0"), input);
        let h = act(t, cfg, h);
        let bt = dense(t, b, &format!("{prefix}.l1"), h);
        let bt = act(t, cfg, bt);
        let len = t.value(bt).len();
        let row = t.reshape(bt, 1, len);
        let g = conv_stack(t, cfg, b, "G.D.conv", cfg.dec_layers, cfg.dec_kernel, row);
        out.blocks.push((dur, bt));
        out.latents.push((dur, g));
        input = bt;
    }
    out
}

/// Zero-mean, unit-variance copy of the generator's conditioning signal.
pub fn generator_input(s2: &[f64]) -> Vec<f64> {
    let n = s2.len() as f64;
    let mean = s2.iter().sum::<f64>() / n;
    let sd = (s2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        s2.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; s2.len()]
    }
}

fn check_window(s: &Signal, cfg: &ModelConfig) -> Result<()> {
    if s.fps() != cfg.fps {
        return Err(Error::FpsMismatch {
            left: s.fps(),
            right: cfg.fps,
        });
    }
    if s.len() != cfg.s2_len() {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: cfg.s2_len(),
        });
    }
    Ok(())
}

fn frozen(params: &ModelParams, t: &mut Tape) -> Bound {
    params.bind(t, |_| false)
}

/// Latent features of a 2 s observation, `(C, 2 fps)`.
pub fn encode(obs: &Signal, params: &ModelParams) -> Result<Tensor> {
    check_window(obs, &params.config)?;
    let mut t = Tape::new();
    let b = frozen(params, &mut t);
    let x = t.constant(Tensor::new(1, obs.len(), obs.samples().to_vec()));
    let f = encode_var(&mut t, &params.config, &b, x);
    Ok(t.value(f).clone())
}

/// Signal decoded from features of any length.
pub fn estimate(f: &Tensor, params: &ModelParams) -> Result<Signal> {
    if f.rows() != params.config.channels {
        return Err(Error::InvalidArgument(format!(
            "expected {} feature channels, got {}",
            params.config.channels,
            f.rows()
        )));
    }
    let mut t = Tape::new();
    let e_w = t.constant(params.get("E.w").clone());
    let e_b = t.constant(params.get("E.b").clone());
    let fv = t.constant(f.clone());
    let y = t.matmul(e_w, fv);
    let y = t.add_col_bias(y, e_b);
    Signal::new(t.value(y).data().to_vec(), params.config.fps)
}

/// `E(F(x))` for a raw 2 s observation, standardized first.
pub fn infer_s2(obs: &Signal, params: &ModelParams) -> Result<Signal> {
    let f = encode(&obs.standardized(), params)?;
    estimate(&f, params)
}

/// Generator outputs for a 2 s estimated signal.
pub fn generate(s2: &Signal, noise_seed: u64, params: &ModelParams) -> Result<Generated<Tensor>> {
    let cfg = &params.config;
    check_window(s2, cfg)?;
    let mut t = Tape::new();
    let b = frozen(params, &mut t);
    let s = t.constant(Tensor::vector(generator_input(s2.samples())));
    let n = t.constant(Tensor::vector(noise_vector(noise_seed, cfg.noise_width)));
    let g = generate_var(&mut t, cfg, &b, s, n);
    let take = |v: &[(u32, Var)]| v.iter().map(|(d, x)| (*d, t.value(*x).clone())).collect();
    Ok(Generated {
        blocks: take(&g.blocks),
        latents: take(&g.latents),
    })
}

/// 10 s signal from a 2 s estimated signal.
pub fn reconstruct(
    s2: &Signal,
    strategy: Strategy,
    params: Option<&ModelParams>,
    seed: u64,
) -> Result<Signal> {
    if !strategy.is_learned() {
        let x = s2.samples();
        return Signal::new((0..5 * x.len()).map(|i| x[i % x.len()]).collect(), s2.fps());
    }
    let params = params.ok_or_else(|| {
        Error::InvalidArgument(format!("strategy {strategy} needs model parameters"))
    })?;
    let g = generate(s2, seed, params)?;
    let g10 = g.latent(10).expect("generator always ends at 10 s");
    estimate(g10, params)
}
