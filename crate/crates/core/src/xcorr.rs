//! Normalized correlation primitives.
//!
//! Lag convention: the running correlation at lag `k` pairs `a[n + k]` with
//! `b[n]`, samples shifted out of range count as zero, and the normalization
//! always uses the full norms of both inputs. Values therefore stay in
//! `[-1, 1]` and shrink with the overlap.
//!
//! [`swm_ncc`] slides the shorter signal along the longer one. For each window
//! position `tau` it compares the short signal against `long[tau..tau + L]`
//! over every lag and keeps the best correlation. No zero-padding of the short
//! signal is involved, unlike plain [`ncc`] on unequal lengths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigcore::Signal;

/// Shortest admissible cycle window: one beat at 40 bpm.
pub const MIN_DELTA_T_S: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    /// Indexed by lag `k`.
    Lag,
    /// Indexed by window position `tau`.
    Tau,
}

/// A lag- or position-indexed correlation sequence. `values[i]` belongs to
/// index `origin + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningCorrelation {
    pub index_kind: IndexKind,
    pub origin: i64,
    pub values: Vec<f64>,
}

impl RunningCorrelation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index (not offset) of the first maximum.
    pub fn argmax(&self) -> i64 {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        self.origin + best as i64
    }
}

/// Whether correlations use raw samples or per-window mean-removed samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NcMode {
    #[default]
    Raw,
    MeanRemoved,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

/// Cosine similarity of two equal-length sample vectors.
pub fn nc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Running correlation over lags `-(L-1) ..= L-1` of two equal-length signals.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<RunningCorrelation> {
    ncc_with(a, b, NcMode::Raw)
}

pub fn ncc_with(a: &[f64], b: &[f64], mode: NcMode) -> Result<RunningCorrelation> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty input".into()));
    }
    let (a, b) = match mode {
        NcMode::Raw => (a.to_vec(), b.to_vec()),
        NcMode::MeanRemoved => (centered(a), centered(b)),
    };
    let values = ncc_kernel(&a, &b).ok_or(Error::ZeroNorm)?;
    Ok(RunningCorrelation {
        index_kind: IndexKind::Lag,
        origin: -(a.len() as i64 - 1),
        values,
    })
}

/// Full-lag normalized correlation; `None` when either input has zero norm.
pub(crate) fn ncc_kernel(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let l = a.len() as i64;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let scale = na * nb;
    Some(
        (-(l - 1)..l)
            .map(|k| {
                let (lo, hi) = (0.max(-k), l.min(l - k));
                let mut s = 0.0;
                for n in lo..hi {
                    s += a[(n + k) as usize] * b[n as usize];
                }
                s / scale
            })
            .collect(),
    )
}

/// Sliding-window-maximum correlation of `short` along `long`.
pub fn swm_ncc(short: &Signal, long: &Signal) -> Result<RunningCorrelation> {
    swm_ncc_with(short, long, NcMode::Raw)
}

pub fn swm_ncc_with(short: &Signal, long: &Signal, mode: NcMode) -> Result<RunningCorrelation> {
    if short.fps() != long.fps() {
        return Err(Error::FpsMismatch {
            left: short.fps(),
            right: long.fps(),
        });
    }
    let values = match mode {
        NcMode::Raw => swm_values(short.samples(), long.samples())?,
        NcMode::MeanRemoved => swm_mean_removed(short.samples(), long.samples())?,
    };
    Ok(RunningCorrelation {
        index_kind: IndexKind::Tau,
        origin: 0,
        values,
    })
}

/// Slice-level SWM-NCC values.
pub fn swm_values(short: &[f64], long: &[f64]) -> Result<Vec<f64>> {
    Ok(SwmTable::compute(short, long)?.m)
}

fn swm_mean_removed(short: &[f64], long: &[f64]) -> Result<Vec<f64>> {
    check_lengths(short, long)?;
    let a = centered(short);
    if norm(&a) == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let ls = short.len();
    Ok((0..=long.len() - ls)
        .map(|tau| {
            let w = centered(&long[tau..tau + ls]);
            ncc_kernel(&a, &w)
                .map(|c| c.into_iter().fold(f64::NEG_INFINITY, f64::max))
                .unwrap_or(0.0)
        })
        .collect())
}

fn check_lengths(short: &[f64], long: &[f64]) -> Result<()> {
    if short.is_empty() {
        return Err(Error::InvalidArgument("empty short signal".into()));
    }
    if short.len() > long.len() {
        return Err(Error::InvalidArgument(format!(
            "short signal ({}) longer than long signal ({})",
            short.len(),
            long.len()
        )));
    }
    Ok(())
}

/// SWM-NCC values plus everything needed to differentiate them.
#[derive(Debug, Clone)]
pub(crate) struct SwmTable {
    /// `m[tau]`.
    pub m: Vec<f64>,
    /// Every lag attaining `m[tau]` (more than one only on exact ties).
    pub argmax: Vec<Vec<i64>>,
    pub short_norm: f64,
    pub window_norms: Vec<f64>,
}

impl SwmTable {
    /// Numerators come from prefix/suffix sums along each diagonal
    /// `d = tau - k`, so a window costs `O(L)` rather than `O(L^2)`.
    pub fn compute(short: &[f64], long: &[f64]) -> Result<SwmTable> {
        check_lengths(short, long)?;
        let ls = short.len();
        let ll = long.len();
        let positions = ll - ls + 1;
        let short_norm = norm(short);
        if short_norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let window_norms: Vec<f64> = (0..positions).map(|t| norm(&long[t..t + ls])).collect();

        let mut m = vec![f64::NEG_INFINITY; positions];
        let mut argmax: Vec<Vec<i64>> = vec![Vec::new(); positions];
        let mut prefix = vec![0.0; ls + 1];
        let mut suffix = vec![0.0; ls + 1];
        let (ls_i, ll_i) = (ls as i64, ll as i64);

        for d in -(ls_i - 1)..ll_i {
            // sums of short[j] * long[j + d]; out-of-range terms are zero
            let j_lo = 0.max(-d) as usize;
            let j_hi = ls.min((ll_i - d).max(0) as usize);
            prefix[0] = 0.0;
            for j in 0..ls {
                let t = if j >= j_lo && j < j_hi {
                    short[j] * long[(j as i64 + d) as usize]
                } else {
                    0.0
                };
                prefix[j + 1] = prefix[j] + t;
            }
            suffix[ls] = 0.0;
            for j in (0..ls).rev() {
                let t = if j >= j_lo && j < j_hi {
                    short[j] * long[(j as i64 + d) as usize]
                } else {
                    0.0
                };
                suffix[j] = suffix[j + 1] + t;
            }
            let tau_lo = 0.max(d - (ls_i - 1));
            let tau_hi = (positions as i64 - 1).min(d + ls_i - 1);
            for tau in tau_lo..=tau_hi {
                let k = tau - d;
                let wn = window_norms[tau as usize];
                let c = if wn == 0.0 {
                    0.0
                } else {
                    let num = if k >= 0 {
                        suffix[k as usize]
                    } else {
                        prefix[(ls_i + k) as usize]
                    };
                    num / (short_norm * wn)
                };
                let slot = tau as usize;
                if c > m[slot] {
                    m[slot] = c;
                    argmax[slot].clear();
                    argmax[slot].push(k);
                } else if c == m[slot] {
                    argmax[slot].push(k);
                }
            }
        }
        Ok(SwmTable {
            m,
            argmax,
            short_norm,
            window_norms,
        })
    }

    /// Adds `upstream[tau] * d m[tau] / d(short, long)` into the two gradient
    /// buffers. Ties share the gradient equally.
    pub fn backward(
        &self,
        short: &[f64],
        long: &[f64],
        upstream: &[f64],
        g_short: &mut [f64],
        g_long: &mut [f64],
    ) {
        let ls = short.len() as i64;
        for (tau, &g) in upstream.iter().enumerate() {
            if g == 0.0 || self.window_norms[tau] == 0.0 {
                continue;
            }
            let ks = &self.argmax[tau];
            let share = g / ks.len() as f64;
            let na = self.short_norm;
            let nw = self.window_norms[tau];
            let c = self.m[tau];
            let w = &long[tau..tau + ls as usize];
            for &k in ks {
                // c = sum_n short[n + k] w[n] / (na nw)
                let (lo, hi) = (0.max(-k), ls.min(ls - k));
                for n in lo..hi {
                    let (j, n) = ((n + k) as usize, n as usize);
                    g_short[j] += share * w[n] / (na * nw);
                    g_long[tau + n] += share * short[j] / (na * nw);
                }
                for j in 0..ls as usize {
                    g_short[j] -= share * c * short[j] / (na * na);
                    g_long[tau + j] -= share * c * w[j] / (nw * nw);
                }
            }
        }
    }
}

/// Chunking of a position-indexed correlation into heartbeat-cycle windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSegmentation {
    pub segment_len: usize,
    pub n_segments: usize,
    pub delta_t_s: f64,
}

impl CycleSegmentation {
    /// `segment_len = ceil(fps * delta_t_s)`, `n_segments = max(floor(len / segment_len), 1)`.
    ///
    /// Samples past the last full chunk are not used. When `m_len` is shorter
    /// than one chunk, the single chunk is padded with zeros.
    pub fn new(m_len: usize, fps: u32, delta_t_s: f64) -> Result<Self> {
        if !(delta_t_s >= MIN_DELTA_T_S) {
            return Err(Error::InvalidArgument(format!(
                "cycle window {delta_t_s} s is shorter than {MIN_DELTA_T_S} s"
            )));
        }
        if fps == 0 {
            return Err(Error::InvalidArgument("fps must be positive".into()));
        }
        if m_len == 0 {
            return Err(Error::InvalidArgument("empty running correlation".into()));
        }
        let segment_len = (fps as f64 * delta_t_s - 1e-9).ceil() as usize;
        let n_segments = (m_len / segment_len).max(1);
        Ok(Self {
            segment_len,
            n_segments,
            delta_t_s,
        })
    }
}

/// Mean over cycle chunks of each chunk's maximum correlation.
pub fn fp(m: &RunningCorrelation, fps: u32, delta_t_s: f64) -> Result<f64> {
    fp_values(&m.values, fps, delta_t_s)
}

pub fn fp_values(m: &[f64], fps: u32, delta_t_s: f64) -> Result<f64> {
    let seg = CycleSegmentation::new(m.len(), fps, delta_t_s)?;
    let total: f64 = (0..seg.n_segments)
        .map(|h| {
            (0..seg.segment_len)
                .map(|q| m.get(q + h * seg.segment_len).copied().unwrap_or(0.0))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / seg.n_segments as f64)
}
