use std::collections::BTreeMap;

use serde_json::json;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with per-tensor first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update of every tensor in `grads`.
    pub fn update(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
    ) {
        self.step += 1;
        let b1c = 1.0 - BETA1.powi(self.step as i32);
        let b2c = 1.0 - BETA2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("gradient for a known tensor");
            let (r, c) = g.shape();
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(r, c));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(r, c));
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = &mut m.data_mut()[i];
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let mhat = m.data()[i] / b1c;
                let vhat = v.data()[i] / b2c;
                p.data_mut()[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
            }
        }
    }

    /// Moments as named tensors under `prefix`, for checkpoints.
    pub fn export(&self, prefix: &str, out: &mut BTreeMap<String, Tensor>) -> serde_json::Value {
        for (n, t) in &self.m {
            out.insert(format!("{prefix}.m.{n}"), t.clone());
        }
        for (n, t) in &self.v {
            out.insert(format!("{prefix}.v.{n}"), t.clone());
        }
        json!({ "step": self.step, "lr": self.lr })
    }

    pub fn import(
        prefix: &str,
        meta: &serde_json::Value,
        tensors: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("missing optimizer state `{prefix}`"));
        let step = meta.get("step").and_then(|v| v.as_u64()).ok_or_else(bad)?;
        let lr = meta.get("lr").and_then(|v| v.as_f64()).ok_or_else(bad)?;
        let mut opt = Adam::new(lr);
        opt.step = step;
        for (name, t) in tensors {
            if let Some(rest) = name.strip_prefix(&format!("{prefix}.m.")) {
                opt.m.insert(rest.to_string(), t.clone());
            } else if let Some(rest) = name.strip_prefix(&format!("{prefix}.v.")) {
                opt.v.insert(rest.to_string(), t.clone());
            }
        }
        Ok(opt)
    }
}
