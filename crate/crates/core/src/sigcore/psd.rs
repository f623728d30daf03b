//! Band-limited power spectra and the quantities derived from them.
//!
//! The spectrum is a plain DFT of the mean-removed, un-windowed signal with
//! bin spacing `fps / len`. Short windows therefore show the full leakage of
//! a rectangular window, which is exactly what the rest of the crate studies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

/// Lower edge of the admissible heart-rate band (40 bpm).
pub const HR_BAND_LO_HZ: f64 = 0.66;
/// Upper edge of the admissible heart-rate band (250 bpm).
pub const HR_BAND_HI_HZ: f64 = 4.16;

const BIN_EPS: f64 = 1e-9;

/// Indices `k` of the non-negative DFT bins whose frequency `k * fps / n`
/// lies inside `[lo_hz, hi_hz]`.
pub fn band_bins(n: usize, fps: u32, lo_hz: f64, hi_hz: f64) -> Vec<usize> {
    let df = fps as f64 / n as f64;
    (0..=n / 2)
        .filter(|&k| {
            let f = k as f64 * df;
            f >= lo_hz - BIN_EPS && f <= hi_hz + BIN_EPS
        })
        .collect()
}

/// `(cos, sin)` of `2*pi*k*j/n`, with the product reduced modulo `n` first.
#[inline]
pub(crate) fn twiddle(k: usize, j: usize, n: usize) -> (f64, f64) {
    let r = (k * j) % n;
    let a = 2.0 * PI * r as f64 / n as f64;
    (a.cos(), a.sin())
}

/// Normalized power over the heart-rate band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandDistribution {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub bin_freqs_hz: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BandDistributionJson {
    band: [f64; 2],
    freqs: Vec<f64>,
    probs: Vec<f64>,
}

impl Serialize for BandDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BandDistributionJson {
            band: [self.band_lo_hz, self.band_hi_hz],
            freqs: self.bin_freqs_hz.clone(),
            probs: self.probs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BandDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = BandDistributionJson::deserialize(d)?;
        let dist = BandDistribution {
            band_lo_hz: j.band[0],
            band_hi_hz: j.band[1],
            bin_freqs_hz: j.freqs,
            probs: j.probs,
        };
        dist.validate().map_err(serde::de::Error::custom)?;
        Ok(dist)
    }
}

impl BandDistribution {
    /// Builds a distribution over `freqs`, checking the invariants.
    pub fn new(freqs: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let d = BandDistribution {
            band_lo_hz: HR_BAND_LO_HZ,
            band_hi_hz: HR_BAND_HI_HZ,
            bin_freqs_hz: freqs,
            probs,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.probs.len() != self.bin_freqs_hz.len() {
            return Err(Error::LengthMismatch {
                left: self.bin_freqs_hz.len(),
                right: self.probs.len(),
            });
        }
        if self.probs.is_empty() {
            return Err(Error::TooShort { bins: 0 });
        }
        if self.bin_freqs_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "bin frequencies must increase".into(),
            ));
        }
        if self.probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidArgument("negative probability".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Whether two distributions live on the same frequency grid.
    pub fn same_grid(&self, other: &BandDistribution) -> bool {
        self.bin_freqs_hz.len() == other.bin_freqs_hz.len()
            && self
                .bin_freqs_hz
                .iter()
                .zip(&other.bin_freqs_hz)
                .all(|(a, b)| (a - b).abs() <= BIN_EPS)
    }

    /// Index of the largest bin; ties resolve to the lower frequency.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Spectrum options. Zero-padding exists for diagnostics only; the default
/// pipeline never pads.
#[derive(Debug, Clone, Copy, Default)]
pub struct PsdOptions {
    pub zero_pad_to: Option<usize>,
}

/// In-band, unit-sum power spectrum of `signal`.
pub fn psd_band(signal: &Signal) -> Result<BandDistribution> {
    psd_band_with(signal, PsdOptions::default())
}

pub fn psd_band_with(signal: &Signal, opts: PsdOptions) -> Result<BandDistribution> {
    let x = signal.samples();
    let n = opts.zero_pad_to.unwrap_or(x.len()).max(x.len());
    let bins = band_bins(n, signal.fps(), HR_BAND_LO_HZ, HR_BAND_HI_HZ);
    if bins.len() < 2 {
        return Err(Error::TooShort { bins: bins.len() });
    }
    let freqs: Vec<f64> = bins
        .iter()
        .map(|&k| k as f64 * signal.fps() as f64 / n as f64)
        .collect();

    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let energy: f64 = centered.iter().map(|v| v * v).sum();
    let raw: f64 = x.iter().map(|v| v * v).sum();

    let power = band_power(&centered, n, &bins);
    let total: f64 = power.iter().sum();
    let probs = if energy <= 1e-24 * raw || total <= 0.0 {
        vec![1.0 / bins.len() as f64; bins.len()]
    } else {
        power.iter().map(|p| p / total).collect()
    };
    BandDistribution::new(freqs, probs)
}

/// Unnormalized `|X_k|^2` for the listed bins of an `n`-point DFT of `x`
/// (implicitly zero-extended when `n > x.len()`).
pub fn band_power(x: &[f64], n: usize, bins: &[usize]) -> Vec<f64> {
    bins.iter()
        .map(|&k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let (c, s) = twiddle(k, j, n);
                re += v * c;
                im -= v * s;
            }
            re * re + im * im
        })
        .collect()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &BandDistribution) -> f64 {
    entropy_of(&dist.probs)
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Rescales entropies to weights: the least uncertain member gets 1, the most
/// uncertain gets 0. Equal entropies give all ones.
pub fn weights_from_entropies(entropies: &[f64]) -> Vec<f64> {
    let (lo, hi) = entropies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| {
            (lo.min(h), hi.max(h))
        });
    if !(hi > lo) {
        return vec![1.0; entropies.len()];
    }
    entropies
        .iter()
        .map(|h| (1.0 - (h - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect()
}

pub fn entropy_weights(dists: &[BandDistribution]) -> Vec<f64> {
    let hs: Vec<f64> = dists.iter().map(entropy).collect();
    weights_from_entropies(&hs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HrMethod {
    PsdPeak,
    Ibi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    pub bpm: f64,
    pub method: HrMethod,
    pub confidence: f64,
}

/// Heart rate at the highest in-band peak.
pub fn hr_from_psd(dist: &BandDistribution) -> HrEstimate {
    let k = dist.argmax();
    let max_h = (dist.len() as f64).ln();
    let confidence = if max_h > 0.0 {
        (1.0 - entropy(dist) / max_h).clamp(0.0, 1.0)
    } else {
        1.0
    };
    HrEstimate {
        bpm: 60.0 * dist.bin_freqs_hz[k],
        method: HrMethod::PsdPeak,
        confidence,
    }
}

/// Convenience: `hr_from_psd(psd_band(signal))`.
pub fn hr_psd(signal: &Signal) -> Result<HrEstimate> {
    Ok(hr_from_psd(&psd_band(signal)?))
}
