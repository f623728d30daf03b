use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fit::STREAM_EVAL;
use crate::error::Result;
use crate::models::{infer_s2, reconstruct, ModelParams, Strategy};
use crate::seeds;
use crate::sigcore::{hr_from_ibi, hr_psd, metrics, HrEstimate, MetricsReport, Signal};
use crate::synth::{Corpus, Split, SynthRecord};

/// Starts of the non-overlapping 2 s evaluation clips of a 10 s record.
pub fn clip_starts() -> [f64; 5] {
    [0.0, 2.0, 4.0, 6.0, 8.0]
}

/// Heart rates of one evaluation clip. IBI columns are NaN when too few
/// beats were found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub record_id: String,
    pub gt_bpm: f64,
    pub raw2s_psd: f64,
    pub raw2s_ibi: f64,
    pub recon10s_psd: f64,
    pub recon10s_ibi: f64,
}

impl EvalRow {
    pub const HEADER: &'static str =
        "record_id,gt_bpm,raw2s_psd,raw2s_ibi,recon10s_psd,recon10s_ibi";

    pub fn write_csv<W: Write>(rows: &[EvalRow], mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.record_id, r.gt_bpm, r.raw2s_psd, r.raw2s_ibi, r.recon10s_psd, r.recon10s_ibi
            )?;
        }
        Ok(())
    }
}

/// Error summary for the four heart-rate variants. The IBI reports cover
/// only clips where IBI produced an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub clips: usize,
    pub raw2s_psd: MetricsReport,
    pub raw2s_ibi: Option<MetricsReport>,
    pub raw2s_ibi_count: usize,
    pub recon10s_psd: MetricsReport,
    pub recon10s_ibi: Option<MetricsReport>,
    pub recon10s_ibi_count: usize,
}

fn subset_metrics(
    rows: &[EvalRow],
    col: fn(&EvalRow) -> f64,
) -> Result<(Option<MetricsReport>, usize)> {
    let (p, g): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| col(r).is_finite())
        .map(|r| (col(r), r.gt_bpm))
        .unzip();
    if p.is_empty() {
        return Ok((None, 0));
    }
    Ok((Some(metrics(&p, &g)?), p.len()))
}

impl EvalSummary {
    pub fn from_rows(rows: &[EvalRow]) -> Result<Self> {
        let gt: Vec<f64> = rows.iter().map(|r| r.gt_bpm).collect();
        let col = |f: fn(&EvalRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let (raw2s_ibi, raw2s_ibi_count) = subset_metrics(rows, |r| r.raw2s_ibi)?;
        let (recon10s_ibi, recon10s_ibi_count) = subset_metrics(rows, |r| r.recon10s_ibi)?;
        Ok(Self {
            clips: rows.len(),
            raw2s_psd: metrics(&col(|r| r.raw2s_psd), &gt)?,
            raw2s_ibi,
            raw2s_ibi_count,
            recon10s_psd: metrics(&col(|r| r.recon10s_psd), &gt)?,
            recon10s_ibi,
            recon10s_ibi_count,
        })
    }
}

/// Output of the inference path for one 2 s observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub s2: Signal,
    pub reconstructed: Signal,
    pub hr: HrEstimate,
}

/// `s2 = E(F(obs))`, a 10 s reconstruction, and the PSD heart rate of the
/// reconstruction.
pub fn infer(
    obs2: &Signal,
    params: &ModelParams,
    strategy: Strategy,
    seed: u64,
) -> Result<Inference> {
    let s2 = infer_s2(obs2, params)?;
    let reconstructed = reconstruct(&s2, strategy, Some(params), seed)?;
    let hr = hr_psd(&reconstructed)?;
    Ok(Inference {
        s2,
        reconstructed,
        hr,
    })
}

fn ibi_or_nan(s: &Signal) -> f64 {
    hr_from_ibi(s).map(|e| e.bpm).unwrap_or(f64::NAN)
}

/// Evaluates one clip of `rec` starting at `start_s`.
pub(crate) fn eval_clip(
    id: String,
    rec: &SynthRecord,
    start_s: f64,
    params: &ModelParams,
    strategy: Strategy,
    noise_seed: u64,
) -> Result<EvalRow> {
    let obs = rec.observed.window(start_s, 2.0)?;
    let inf = infer(&obs, params, strategy, noise_seed)?;
    Ok(EvalRow {
        record_id: id,
        gt_bpm: rec.mean_hr(start_s, 2.0),
        raw2s_psd: hr_psd(&inf.s2)?.bpm,
        raw2s_ibi: ibi_or_nan(&inf.s2),
        recon10s_psd: inf.hr.bpm,
        recon10s_ibi: ibi_or_nan(&inf.reconstructed),
    })
}

/// Runs every test record's 2 s clips through the pipeline.
pub fn evaluate(
    corpus: &Corpus,
    params: &ModelParams,
    strategy: Strategy,
    seed: u64,
) -> Result<(Vec<EvalRow>, EvalSummary)> {
    let mut rows = Vec::new();
    for i in corpus.indices(Split::Test) {
        let rec = &corpus.records[i];
        let id = &corpus.manifest.records[i].id;
        for (c, start) in clip_starts().into_iter().enumerate() {
            let noise_seed = seeds::derive(seed, &[STREAM_EVAL, i as u64, c as u64]);
            rows.push(eval_clip(
                format!("{id}_c{c}"),
                rec,
                start,
                params,
                strategy,
                noise_seed,
            )?);
        }
    }
    let summary = EvalSummary::from_rows(&rows)?;
    Ok((rows, summary))
}
