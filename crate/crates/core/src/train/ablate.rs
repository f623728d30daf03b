use std::io::Write;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, infer, EvalRow, EvalSummary};
use super::fit::{alternate, STREAM_EVAL};
use super::{TLoss, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelParams, Strategy};
use crate::seeds;
use crate::sigcore::{hr_psd, metrics, MetricsReport};
use crate::synth::{sudden_change, Corpus, SUDDEN_FACTOR};

/// One variant of an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mae: f64,
    pub rmse: f64,
    pub pearson_r: f64,
    /// Number of clips the metrics cover.
    pub n: usize,
}

impl AblationRow {
    fn new(variant: impl Into<String>, m: Option<MetricsReport>, n: usize) -> Self {
        let m = m.unwrap_or(MetricsReport {
            mae: f64::NAN,
            rmse: f64::NAN,
            pearson_r: f64::NAN,
        });
        Self {
            variant: variant.into(),
            mae: m.mae,
            rmse: m.rmse,
            pearson_r: m.pearson_r,
            n,
        }
    }

    pub fn write_csv<W: Write>(rows: &[AblationRow], mut w: W) -> Result<()> {
        writeln!(w, "variant,mae,rmse,pearson_r,n")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.variant, r.mae, r.rmse, r.pearson_r, r.n
            )?;
        }
        Ok(())
    }
}

fn recon_row(name: impl Into<String>, s: &EvalSummary) -> AblationRow {
    AblationRow::new(name, Some(s.recon10s_psd), s.clips)
}

/// One full run per `T` loss, scored on the reconstructed 10 s PSD rate.
pub fn ablate_loss(corpus: &Corpus, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    TLoss::ALL
        .into_iter()
        .map(|loss| {
            let (ck, _) = alternate(
                corpus,
                TrainConfig {
                    loss,
                    ..base.clone()
                },
            )?;
            let (_, s) = evaluate(corpus, &ck.params, base.strategy, base.seed)?;
            Ok(recon_row(loss.name(), &s))
        })
        .collect()
}

/// Rows `w/o`, `duplication`, `forward`, `backward`, `fwd-bwd`. The first two
/// reuse the `fwd-bwd` model's `T`.
pub fn ablate_strategy(corpus: &Corpus, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    let mut learned = Vec::new();
    for st in [Strategy::Forward, Strategy::Backward, Strategy::FwdBwd] {
        let (ck, _) = alternate(
            corpus,
            TrainConfig {
                strategy: st,
                ..base.clone()
            },
        )?;
        let (_, s) = evaluate(corpus, &ck.params, st, base.seed)?;
        learned.push((st, ck.params, s));
    }
    let (_, fb_params, fb) = &learned[2];
    let (_, dup) = evaluate(corpus, fb_params, Strategy::Duplication, base.seed)?;
    let mut rows = vec![
        AblationRow::new("w/o", Some(fb.raw2s_psd), fb.clips),
        recon_row("duplication", &dup),
    ];
    rows.extend(learned.iter().map(|(st, _, s)| recon_row(st.name(), s)));
    Ok(rows)
}

/// Generator block subsets, each trained from scratch.
pub fn ablate_blocks(corpus: &Corpus, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    let variants: [&[u32]; 4] = [&[4, 10], &[4, 6, 10], &[4, 8, 10], &[4, 6, 8, 10]];
    variants
        .into_iter()
        .map(|blocks| {
            let model = ModelConfig {
                blocks: blocks.to_vec(),
                ..base.model.clone()
            };
            let (ck, _) = alternate(
                corpus,
                TrainConfig {
                    model,
                    ..base.clone()
                },
            )?;
            let (_, s) = evaluate(corpus, &ck.params, base.strategy, base.seed)?;
            let name = blocks
                .iter()
                .map(|b| format!("B{}", (b - 2) / 2))
                .collect::<Vec<_>>()
                .join("-");
            Ok(recon_row(name, &s))
        })
        .collect()
}

/// PSD and IBI rates on raw 2 s and reconstructed 10 s signals of one model.
pub fn ablate_hr_calc(
    corpus: &Corpus,
    params: &ModelParams,
    strategy: Strategy,
    seed: u64,
) -> Result<(Vec<AblationRow>, Vec<EvalRow>)> {
    let (rows, s) = evaluate(corpus, params, strategy, seed)?;
    Ok((
        vec![
            AblationRow::new("raw2s_psd", Some(s.raw2s_psd), s.clips),
            AblationRow::new("raw2s_ibi", s.raw2s_ibi, s.raw2s_ibi_count),
            AblationRow::new("recon10s_psd", Some(s.recon10s_psd), s.clips),
            AblationRow::new("recon10s_ibi", s.recon10s_ibi, s.recon10s_ibi_count),
        ],
        rows,
    ))
}

/// One sudden-change composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuddenCase {
    pub record_id: String,
    pub base_bpm: f64,
    /// Ground truth of the final 2 s.
    pub gt_bpm: f64,
    /// PSD rate of the whole 10 s observation.
    pub window10_bpm: f64,
    /// Rate from the 2 s pipeline on the final 2 s.
    pub pipeline_bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuddenReport {
    pub factor: f64,
    pub cases: Vec<SuddenCase>,
    /// Test records skipped because the raised rate leaves the training range.
    pub skipped: usize,
}

impl SuddenReport {
    pub fn window10_errors(&self) -> Vec<f64> {
        self.cases
            .iter()
            .map(|c| (c.window10_bpm - c.gt_bpm).abs())
            .collect()
    }

    pub fn pipeline_errors(&self) -> Vec<f64> {
        self.cases
            .iter()
            .map(|c| (c.pipeline_bpm - c.gt_bpm).abs())
            .collect()
    }

    pub fn rows(&self) -> Result<Vec<AblationRow>> {
        let gt: Vec<f64> = self.cases.iter().map(|c| c.gt_bpm).collect();
        let w: Vec<f64> = self.cases.iter().map(|c| c.window10_bpm).collect();
        let p: Vec<f64> = self.cases.iter().map(|c| c.pipeline_bpm).collect();
        let n = self.cases.len();
        Ok(vec![
            AblationRow::new("window10s_psd", Some(metrics(&w, &gt)?), n),
            AblationRow::new("pipeline2s", Some(metrics(&p, &gt)?), n),
        ])
    }
}

/// Composites from the test records whose raised rate stays inside the
/// corpus rate range.
pub fn ablate_sudden(
    corpus: &Corpus,
    params: &ModelParams,
    strategy: Strategy,
    seed: u64,
) -> Result<SuddenReport> {
    let hi = corpus.manifest.spec.hr_range.1;
    let mut cases = Vec::new();
    let mut skipped = 0;
    for i in corpus.indices(crate::synth::Split::Test) {
        let rec = &corpus.records[i];
        let peak = rec
            .hr_trajectory
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if peak * SUDDEN_FACTOR > hi {
            skipped += 1;
            continue;
        }
        let (comp, gt) = sudden_change(rec, SUDDEN_FACTOR)?;
        let window10 = hr_psd(&comp.observed.standardized())?.bpm;
        let noise_seed = seeds::derive(seed, &[STREAM_EVAL, i as u64, 99]);
        let inf = infer(
            &comp.observed.window(8.0, 2.0)?,
            params,
            strategy,
            noise_seed,
        )?;
        cases.push(SuddenCase {
            record_id: corpus.manifest.records[i].id.clone(),
            base_bpm: rec.mean_hr(0.0, 8.0),
            gt_bpm: gt,
            window10_bpm: window10,
            pipeline_bpm: inf.hr.bpm,
        });
    }
    if cases.is_empty() {
        return Err(Error::InvalidArgument(
            "no test record admits a sudden-change composite".into(),
        ));
    }
    Ok(SuddenReport {
        factor: SUDDEN_FACTOR,
        cases,
        skipped,
    })
}
