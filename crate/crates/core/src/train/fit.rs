use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde_json::json;

use super::adam::Adam;
use super::eval::evaluate;
use super::log::{LogRecord, RunLog};
use super::TrainConfig;
use crate::autodiff::{DftBasis, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{band_basis, ce_var, mps_g_var, mps_var, ncc_loss_var, psd_band_var};
use crate::models::{
    encode_var, estimate_var, generate_var, generator_input, infer_s2, noise_vector, Checkpoint,
    ModelParams, Part,
};
use crate::seeds;
use crate::sigcore::{entropy, psd_band, weights_from_entropies};
use crate::synth::{Corpus, Split, SynthRecord};

const STREAM_INIT: u64 = 11;
const STREAM_SHUFFLE_T: u64 = 12;
const STREAM_SHUFFLE_G: u64 = 13;
const STREAM_NOISE_G: u64 = 14;
pub(crate) const STREAM_EVAL: u64 = 15;

/// Entropy weights of the ground-truth 2 s crops of the training records,
/// in training-index order. They depend on the ground truth only.
pub fn entropy_weights_for(corpus: &Corpus, crop_start_s: f64) -> Result<Vec<f64>> {
    let hs = corpus
        .train()
        .into_iter()
        .map(|r| Ok(entropy(&psd_band(&r.clean.window(crop_start_s, 2.0)?)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(weights_from_entropies(&hs))
}

/// Training state; every random draw is keyed by `(seed, epoch, record)`, so
/// a resumed run replays the uninterrupted one exactly.
#[derive(Debug)]
pub struct Trainer<'c> {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub opt_t: Adam,
    pub opt_g: Adam,
    pub step: u64,
    /// Completed iterations (one `T` epoch plus one `G` epoch each).
    pub epoch: usize,
    pub log: RunLog,
    corpus: &'c Corpus,
    train_idx: Vec<usize>,
    weights: Vec<f64>,
    basis: Arc<DftBasis>,
}

impl<'c> Trainer<'c> {
    pub fn new(corpus: &'c Corpus, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.model.fps != corpus.manifest.spec.fps {
            return Err(Error::FpsMismatch {
                left: config.model.fps,
                right: corpus.manifest.spec.fps,
            });
        }
        let params = ModelParams::init(
            config.model.clone(),
            seeds::sub_seed(config.seed, STREAM_INIT),
        )?;
        let train_idx = corpus.indices(Split::Train);
        if train_idx.is_empty() {
            return Err(Error::InvalidArgument(
                "corpus has no training records".into(),
            ));
        }
        let weights = entropy_weights_for(corpus, config.strategy.crop_start_s())?;
        let basis = band_basis(config.model.s2_len(), config.model.fps)?;
        Ok(Self {
            opt_t: Adam::new(config.lr_t),
            opt_g: Adam::new(config.lr_g),
            config,
            params,
            step: 0,
            epoch: 0,
            log: RunLog::default(),
            corpus,
            train_idx,
            weights,
            basis,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(corpus: &'c Corpus, ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        let config: TrainConfig =
            serde_json::from_value(meta.get("train").cloned().unwrap_or_default())
                .map_err(|e| Error::Checkpoint(format!("bad training config: {e}")))?;
        if meta.get("corpus_hash").and_then(|v| v.as_str()) != Some(corpus.manifest.hash.as_str()) {
            return Err(Error::Checkpoint(
                "checkpoint was trained on a different corpus".into(),
            ));
        }
        let mut t = Trainer::new(corpus, config)?;
        t.params = ck.params.clone();
        t.opt_t = Adam::import("adam_t", &meta["adam_t"], &ck.extra)?;
        t.opt_g = Adam::import("adam_g", &meta["adam_g"], &ck.extra)?;
        t.step = meta["step"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("missing step".into()))?;
        t.epoch = meta["epoch"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("missing epoch".into()))? as usize;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.params.clone(), self.epoch > 0);
        let adam_t = self.opt_t.export("adam_t", &mut ck.extra);
        let adam_g = self.opt_g.export("adam_g", &mut ck.extra);
        ck.meta = json!({
            "train": self.config,
            "epoch": self.epoch,
            "step": self.step,
            "corpus_hash": self.corpus.manifest.hash,
            "adam_t": adam_t,
            "adam_g": adam_g,
        });
        ck
    }

    fn record(&self, i: usize) -> &SynthRecord {
        &self.corpus.records[self.train_idx[i]]
    }

    fn shuffled(&self, stream: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.train_idx.len()).collect();
        order.shuffle(&mut seeds::rng(seeds::derive(
            self.config.seed,
            &[stream, self.epoch as u64],
        )));
        order
    }

    /// Loss of `T` on training record `i`, built on `t`.
    fn t_loss(&self, t: &mut Tape, i: usize) -> Result<(Var, Vec<(String, Var)>)> {
        let cfg = &self.config;
        let rec = self.record(i);
        let crop = cfg.strategy.crop_start_s();
        let obs = rec.observed.window(crop, 2.0)?.standardized();
        let b = self.params.bind(t, |p| p != Part::G);
        let x = t.constant(Tensor::new(1, obs.len(), obs.into_samples()));
        let f = encode_var(t, &cfg.model, &b, x);
        let s = estimate_var(t, &b, f);
        let mut terms = Vec::new();
        let (ce, time) = cfg.loss.parts();
        if let Some(weighted) = ce {
            let gt = psd_band(&rec.clean.window(crop, 2.0)?)?;
            let p = psd_band_var(t, s, &self.basis);
            let g = t.constant(Tensor::vector(gt.probs));
            let l = ce_var(t, p, g, cfg.ce_orientation);
            if weighted {
                terms.push(("l_wce".to_string(), t.scale(l, self.weights[i])));
            } else {
                terms.push(("l_ce".to_string(), l));
            }
        }
        if let Some(mps) = time {
            let gt10 = t.constant(Tensor::vector(rec.clean.samples().to_vec()));
            if mps {
                terms.push((
                    "l_mps".to_string(),
                    mps_var(t, s, gt10, cfg.model.fps, cfg.delta_t_s)?,
                ));
            } else {
                terms.push(("l_ncc".to_string(), ncc_loss_var(t, s, gt10)?));
            }
        }
        let vars: Vec<Var> = terms.iter().map(|(_, v)| *v).collect();
        let all = t.concat(&vars);
        let total = t.sum(all);
        Ok((total, terms))
    }

    /// Loss of `G` on training record `i` given the frozen estimate `s2`.
    fn g_loss(&self, t: &mut Tape, i: usize, s2: &[f64]) -> Result<(Var, Vec<(String, Var)>)> {
        let cfg = &self.config;
        let rec = self.record(i);
        let b = self.params.bind(t, |p| p == Part::G);
        let s = t.constant(Tensor::vector(generator_input(s2)));
        let noise_seed = seeds::derive(
            cfg.seed,
            &[STREAM_NOISE_G, self.epoch as u64, self.train_idx[i] as u64],
        );
        let n = t.constant(Tensor::vector(noise_vector(
            noise_seed,
            cfg.model.noise_width,
        )));
        let gen = generate_var(t, &cfg.model, &b, s, n);
        let signals: Vec<(u32, Var)> = gen
            .latents
            .iter()
            .map(|(d, g)| (*d, estimate_var(t, &b, *g)))
            .collect();
        let gt10 = t.constant(Tensor::vector(rec.clean.samples().to_vec()));
        let (mut total, mut terms) = mps_g_var(t, &signals, gt10, cfg.model.fps, cfg.delta_t_s)?;
        if cfg.anchoring {
            let g10 = signals.last().expect("10 s output").1;
            let start = (cfg.strategy.crop_start_s() * cfg.model.fps as f64).round() as usize;
            let win = t.slice(g10, start, s2.len());
            let c = t.ncc(win, s)?;
            let zero_lag = t.slice(c, s2.len() - 1, 1);
            let neg = t.scale(zero_lag, -1.0);
            let anchor = t.offset(neg, 1.0);
            total = t.add(total, anchor);
            terms.push(("anchor".to_string(), anchor));
        }
        terms.push(("total".to_string(), total));
        Ok((total, terms))
    }

    fn apply(&mut self, part: Part, grads: BTreeMap<String, Tensor>) {
        let opt = if part == Part::G {
            &mut self.opt_g
        } else {
            &mut self.opt_t
        };
        opt.update(&mut self.params.tensors, &grads);
    }

    fn batched<F>(
        &mut self,
        order: &[usize],
        part_filter: fn(Part) -> bool,
        opt_part: Part,
        mut loss: F,
    ) -> Result<Vec<BTreeMap<String, f64>>>
    where
        F: FnMut(&Self, &mut Tape, usize) -> Result<(Var, Vec<(String, Var)>)>,
    {
        let mut out = Vec::new();
        for chunk in order.chunks(self.config.batch_size) {
            self.step += 1;
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut sums: BTreeMap<String, f64> = BTreeMap::new();
            for &i in chunk {
                let mut t = Tape::new();
                let (total, terms) = loss(self, &mut t, i)?;
                let v = t.scalar(total);
                if !v.is_finite() {
                    return Err(Error::Diverged {
                        step: self.step as usize,
                    });
                }
                for (n, var) in &terms {
                    *sums.entry(n.clone()).or_insert(0.0) += t.scalar(*var);
                }
                let g = t.backward(total)?;
                for name in g.param_names() {
                    if !part_filter(Part::of(name)) {
                        continue;
                    }
                    if let Some(gt) = g.param(name) {
                        match grads.get_mut(name) {
                            Some(acc) => acc.add_assign(gt),
                            None => {
                                grads.insert(name.to_string(), gt.clone());
                            }
                        }
                    }
                }
            }
            let k = chunk.len() as f64;
            for g in grads.values_mut() {
                for v in g.data_mut() {
                    *v /= k;
                }
            }
            for v in sums.values_mut() {
                *v /= k;
            }
            if grads
                .values()
                .any(|g| g.data().iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Diverged {
                    step: self.step as usize,
                });
            }
            self.apply(opt_part, grads);
            out.push(sums);
        }
        Ok(out)
    }

    /// One pass of `T` over the training split.
    pub fn run_t_epoch(&mut self) -> Result<()> {
        let order = self.shuffled(STREAM_SHUFFLE_T);
        let start = self.step;
        let rows = self.batched(&order, |p| p != Part::G, Part::F, |s, t, i| s.t_loss(t, i))?;
        for (k, mut losses) in rows.into_iter().enumerate() {
            let total = losses.values().sum();
            losses.insert("total".into(), total);
            self.log.push(LogRecord::T {
                step: start + k as u64 + 1,
                epoch: self.epoch,
                losses,
            });
        }
        Ok(())
    }

    /// One pass of `G` over the training split with `F` and `E` frozen.
    pub fn run_g_epoch(&mut self) -> Result<()> {
        let crop = self.config.strategy.crop_start_s();
        let s2: Vec<Vec<f64>> = (0..self.train_idx.len())
            .map(|i| {
                Ok(
                    infer_s2(&self.record(i).observed.window(crop, 2.0)?, &self.params)?
                        .into_samples(),
                )
            })
            .collect::<Result<_>>()?;
        let order = self.shuffled(STREAM_SHUFFLE_G);
        let start = self.step;
        let rows = self.batched(
            &order,
            |p| p == Part::G,
            Part::G,
            |s, t, i| s.g_loss(t, i, &s2[i]),
        )?;
        for (k, l) in rows.into_iter().enumerate() {
            self.log.push(LogRecord::G {
                step: start + k as u64 + 1,
                epoch: self.epoch,
                l_mps_g: l,
            });
        }
        Ok(())
    }

    /// One iteration: a `T` epoch, a `G` epoch, then the optional evaluation.
    pub fn iterate(&mut self) -> Result<()> {
        self.run_t_epoch()?;
        self.run_g_epoch()?;
        let every = self.config.eval_every;
        if every > 0 && (self.epoch + 1).is_multiple_of(every) {
            let (_, summary) = evaluate(
                self.corpus,
                &self.params,
                self.config.strategy,
                self.config.seed,
            )?;
            self.log.push(LogRecord::Eval {
                epoch: self.epoch,
                metrics: summary,
            });
        }
        self.epoch += 1;
        Ok(())
    }

    /// Iterates until `config.epochs`, writing `epoch_<n>.ckpt` into
    /// `checkpoint_dir` every `checkpoint_every` iterations.
    pub fn run(&mut self, checkpoint_dir: Option<&Path>) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.iterate()?;
            let every = self.config.checkpoint_every;
            if let (Some(dir), true) = (
                checkpoint_dir,
                every > 0 && self.epoch.is_multiple_of(every),
            ) {
                std::fs::create_dir_all(dir)?;
                self.checkpoint()
                    .save(&dir.join(format!("epoch_{:04}.ckpt", self.epoch)))?;
            }
        }
        Ok(())
    }
}

/// Full alternating run from scratch.
pub fn alternate(corpus: &Corpus, config: TrainConfig) -> Result<(Checkpoint, RunLog)> {
    let mut t = Trainer::new(corpus, config)?;
    t.run(None)?;
    Ok((t.checkpoint(), t.log))
}

/// Trains `T` alone for `config.epochs` epochs.
pub fn train_t(corpus: &Corpus, config: TrainConfig) -> Result<(ModelParams, RunLog)> {
    let mut t = Trainer::new(corpus, config)?;
    while t.epoch < t.config.epochs {
        t.run_t_epoch()?;
        t.epoch += 1;
    }
    Ok((t.params, t.log))
}

/// Trains `G` alone for `config.epochs` epochs on top of the given `F` and `E`.
pub fn train_g(
    corpus: &Corpus,
    params: &ModelParams,
    config: TrainConfig,
) -> Result<(ModelParams, RunLog)> {
    let mut t = Trainer::new(corpus, config)?;
    if params.config != t.config.model {
        return Err(Error::InvalidArgument(
            "model config differs from the training config".into(),
        ));
    }
    for (name, v) in &params.tensors {
        if Part::of(name) != Part::G {
            t.params.tensors.insert(name.clone(), v.clone());
        }
    }
    while t.epoch < t.config.epochs {
        t.run_g_epoch()?;
        t.epoch += 1;
    }
    Ok((t.params, t.log))
}
