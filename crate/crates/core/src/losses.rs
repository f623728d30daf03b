//! Training losses, each available on a [`Tape`] for differentiation and as a
//! plain function returning a [`LossValue`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DftBasis, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sigcore::{band_bins, BandDistribution, Signal, HR_BAND_HI_HZ, HR_BAND_LO_HZ};
use crate::xcorr::CycleSegmentation;

/// Floor applied inside the logarithm of the cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Generated durations, in seconds, in chain order.
pub const GEN_DURATIONS: [u32; 4] = [4, 6, 8, 10];

/// A loss value with its named components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub terms: BTreeMap<String, f64>,
}

impl LossValue {
    fn single(name: &str, value: f64) -> Self {
        Self {
            value,
            terms: BTreeMap::from([(name.to_string(), value)]),
        }
    }
}

/// Argument order of the spectral cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CeOrientation {
    /// `-sum pred * ln(gt)`.
    #[default]
    AsPrinted,
    /// `-sum gt * ln(pred)`.
    Conventional,
}

/// DFT basis restricted to the heart-rate band for `n` samples at `fps`.
pub fn band_basis(n: usize, fps: u32) -> Result<Arc<DftBasis>> {
    let bins = band_bins(n, fps, HR_BAND_LO_HZ, HR_BAND_HI_HZ);
    if bins.len() < 2 {
        return Err(Error::TooShort { bins: bins.len() });
    }
    Ok(DftBasis::new(n, &bins))
}

/// Normalized in-band power of the vector `x`, as a column vector.
///
/// The band never contains bin 0, so the mean of `x` has no effect.
pub fn psd_band_var(t: &mut Tape, x: Var, basis: &Arc<DftBasis>) -> Var {
    let re = t.dft(x, basis, false);
    let im = t.dft(x, basis, true);
    let re2 = t.mul(re, re);
    let im2 = t.mul(im, im);
    let power = t.add(re2, im2);
    let total = t.sum(power);
    let total = t.offset(total, 1e-300);
    let one = t.constant(Tensor::scalar(1.0));
    let inv = t.div(one, total);
    t.mul_scalar(power, inv)
}

pub fn ce_var(t: &mut Tape, pred: Var, gt: Var, orientation: CeOrientation) -> Var {
    let (outside, inside) = match orientation {
        CeOrientation::AsPrinted => (pred, gt),
        CeOrientation::Conventional => (gt, pred),
    };
    let clamped = t.clamp_min(inside, LOG_FLOOR);
    let logs = t.log(clamped);
    let prod = t.mul(outside, logs);
    let s = t.sum(prod);
    t.scale(s, -1.0)
}

pub fn wce_var(
    t: &mut Tape,
    pred: Var,
    gt: Var,
    weight: f64,
    orientation: CeOrientation,
) -> Result<Var> {
    check_weight(weight)?;
    let ce = ce_var(t, pred, gt, orientation);
    Ok(t.scale(ce, weight))
}

fn check_weight(weight: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::InvalidArgument(format!(
            "weight {weight} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Cycle-wise aggregation of a running correlation node.
pub fn fp_var(t: &mut Tape, m: Var, fps: u32, delta_t_s: f64) -> Result<Var> {
    let len = t.value(m).len();
    let seg = CycleSegmentation::new(len, fps, delta_t_s)?;
    if len < seg.segment_len {
        let zero = t.constant(Tensor::scalar(0.0));
        let padded = t.concat(&[m, zero]);
        return Ok(t.max(padded));
    }
    let maxima: Vec<Var> = (0..seg.n_segments)
        .map(|h| {
            let chunk = t.slice(m, h * seg.segment_len, seg.segment_len);
            t.max(chunk)
        })
        .collect();
    let all = t.concat(&maxima);
    let s = t.sum(all);
    Ok(t.scale(s, 1.0 / seg.n_segments as f64))
}

/// `1 - FP(SWM-NCC(short, long))`.
pub fn mps_var(t: &mut Tape, short: Var, long: Var, fps: u32, delta_t_s: f64) -> Result<Var> {
    let m = t.swm_ncc(short, long)?;
    let fp = fp_var(t, m, fps, delta_t_s)?;
    let neg = t.scale(fp, -1.0);
    Ok(t.offset(neg, 1.0))
}

/// `1 - max_k ncc(pred, gt)` with `pred` zero-padded at the end to the
/// length of `gt`.
pub fn ncc_loss_var(t: &mut Tape, pred: Var, gt: Var) -> Result<Var> {
    let (lp, lg) = (t.value(pred).len(), t.value(gt).len());
    if lp > lg {
        return Err(Error::LengthMismatch {
            left: lp,
            right: lg,
        });
    }
    let padded = if lp < lg {
        let zeros = t.constant(Tensor::zeros(lg - lp, 1));
        t.concat(&[pred, zeros])
    } else {
        pred
    };
    let c = t.ncc(padded, gt)?;
    let mx = t.max(c);
    let neg = t.scale(mx, -1.0);
    Ok(t.offset(neg, 1.0))
}

/// Term names of the generator loss for the given durations (ascending):
/// one ground-truth term per duration and one chain term per consecutive pair.
pub fn mps_g_term_names(durations: &[u32]) -> Vec<String> {
    let mut names: Vec<String> = durations.iter().map(|d| format!("gt_{d}")).collect();
    names.extend(
        durations
            .windows(2)
            .map(|w| format!("chain_{}_{}", w[0], w[1])),
    );
    names
}

/// Generator loss over the generated signals `(duration_s, node)` in
/// ascending duration order. Returns the total and each named term.
pub fn mps_g_var(
    t: &mut Tape,
    generated: &[(u32, Var)],
    gt10: Var,
    fps: u32,
    delta_t_s: f64,
) -> Result<(Var, Vec<(String, Var)>)> {
    if generated.is_empty() {
        return Err(Error::MissingDuration(10));
    }
    if generated.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument("durations must increase".into()));
    }
    let durations: Vec<u32> = generated.iter().map(|g| g.0).collect();
    let names = mps_g_term_names(&durations);
    let mut terms = Vec::with_capacity(names.len());
    for &(_, s) in generated {
        terms.push(mps_var(t, s, gt10, fps, delta_t_s)?);
    }
    for w in generated.windows(2) {
        terms.push(mps_var(t, w[0].1, w[1].1, fps, delta_t_s)?);
    }
    let all = t.concat(&terms);
    let total = t.sum(all);
    Ok((total, names.into_iter().zip(terms).collect()))
}

fn check_grid(pred: &BandDistribution, gt: &BandDistribution) -> Result<()> {
    if !pred.same_grid(gt) {
        return Err(Error::InvalidArgument(
            "distributions use different bin grids".into(),
        ));
    }
    Ok(())
}

pub fn loss_ce(
    pred: &BandDistribution,
    gt: &BandDistribution,
    orientation: CeOrientation,
) -> Result<LossValue> {
    check_grid(pred, gt)?;
    let mut t = Tape::new();
    let p = t.constant(Tensor::vector(pred.probs.clone()));
    let g = t.constant(Tensor::vector(gt.probs.clone()));
    let v = ce_var(&mut t, p, g, orientation);
    Ok(LossValue::single("ce", t.scalar(v)))
}

pub fn loss_wce(
    pred: &BandDistribution,
    gt: &BandDistribution,
    weight: f64,
    orientation: CeOrientation,
) -> Result<LossValue> {
    check_weight(weight)?;
    let ce = loss_ce(pred, gt, orientation)?.value;
    Ok(LossValue::single("wce", weight * ce))
}

fn same_fps(a: &Signal, b: &Signal) -> Result<()> {
    if a.fps() != b.fps() {
        return Err(Error::FpsMismatch {
            left: a.fps(),
            right: b.fps(),
        });
    }
    Ok(())
}

fn vec_const(t: &mut Tape, s: &Signal) -> Var {
    t.constant(Tensor::vector(s.samples().to_vec()))
}

pub fn loss_mps(pred_short: &Signal, gt_long: &Signal, delta_t_s: f64) -> Result<LossValue> {
    same_fps(pred_short, gt_long)?;
    let mut t = Tape::new();
    let p = vec_const(&mut t, pred_short);
    let g = vec_const(&mut t, gt_long);
    let v = mps_var(&mut t, p, g, pred_short.fps(), delta_t_s)?;
    Ok(LossValue::single("mps", t.scalar(v)))
}

pub fn loss_ncc(pred: &Signal, gt: &Signal) -> Result<LossValue> {
    same_fps(pred, gt)?;
    let mut t = Tape::new();
    let p = vec_const(&mut t, pred);
    let g = vec_const(&mut t, gt);
    let v = ncc_loss_var(&mut t, p, g)?;
    Ok(LossValue::single("ncc", t.scalar(v)))
}

/// Generator loss over all four durations.
pub fn loss_mps_g(
    generated: &BTreeMap<u32, Signal>,
    gt10: &Signal,
    delta_t_s: f64,
) -> Result<LossValue> {
    if let Some(d) = GEN_DURATIONS.iter().find(|d| !generated.contains_key(d)) {
        return Err(Error::MissingDuration(*d));
    }
    loss_mps_g_partial(generated, gt10, delta_t_s)
}

/// Generator loss over whichever durations are present.
pub fn loss_mps_g_partial(
    generated: &BTreeMap<u32, Signal>,
    gt10: &Signal,
    delta_t_s: f64,
) -> Result<LossValue> {
    let mut t = Tape::new();
    let mut nodes = Vec::with_capacity(generated.len());
    for (&d, s) in generated {
        same_fps(s, gt10)?;
        nodes.push((d, vec_const(&mut t, s)));
    }
    let g = vec_const(&mut t, gt10);
    let (total, terms) = mps_g_var(&mut t, &nodes, g, gt10.fps(), delta_t_s)?;
    Ok(LossValue {
        value: t.scalar(total),
        terms: terms.into_iter().map(|(n, v)| (n, t.scalar(v))).collect(),
    })
}
