use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::eval::EvalSummary;
use crate::error::Result;

/// One JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase")]
pub enum LogRecord {
    /// A `T` update; `losses` holds the batch-mean of every active term and
    /// `total`.
    T {
        step: u64,
        epoch: usize,
        #[serde(flatten)]
        losses: BTreeMap<String, f64>,
    },
    /// A `G` update with the batch-mean generator loss terms.
    G {
        step: u64,
        epoch: usize,
        l_mps_g: BTreeMap<String, f64>,
    },
    Eval {
        epoch: usize,
        metrics: EvalSummary,
    },
}

/// Ordered training log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
}

impl RunLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out)?;
        Ok(String::from_utf8(out).expect("json is utf-8"))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Per-epoch mean of a generator loss term.
    pub fn g_term_by_epoch(&self, term: &str) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            if let LogRecord::G { epoch, l_mps_g, .. } = r {
                if let Some(v) = l_mps_g.get(term) {
                    let e = acc.entry(*epoch).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
        }
        acc.into_iter()
            .map(|(e, (s, n))| (e, s / n as f64))
            .collect()
    }

    /// Per-epoch mean of a `T` loss term.
    pub fn t_term_by_epoch(&self, term: &str) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            if let LogRecord::T { epoch, losses, .. } = r {
                if let Some(v) = losses.get(term) {
                    let e = acc.entry(*epoch).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
        }
        acc.into_iter()
            .map(|(e, (s, n))| (e, s / n as f64))
            .collect()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::T { step, .. } | LogRecord::G { step, .. } => Some(*step),
            LogRecord::Eval { .. } => None,
        })
    }
}
