//! Inter-beat-interval heart rate.

use super::psd::{HrEstimate, HrMethod, HR_BAND_HI_HZ, HR_BAND_LO_HZ};
use super::Signal;
use crate::error::{Error, Result};

/// Minimum peak prominence as a fraction of the signal's peak-to-peak range.
pub const PROMINENCE_FRACTION: f64 = 0.2;
/// Fastest admissible rate; sets the minimum peak spacing.
pub const MAX_BPM: f64 = 250.0;

/// Local-maximum pulse peaks, filtered by prominence and minimum spacing.
///
/// Spacing is enforced greedily from the tallest peak down, so of two peaks
/// closer than `fps * 60 / 250` samples only the taller survives.
pub fn detect_peaks(x: &[f64], fps: u32) -> Vec<usize> {
    if x.len() < 3 {
        return Vec::new();
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let min_prom = PROMINENCE_FRACTION * range;
    let min_dist = fps as f64 * 60.0 / MAX_BPM;

    let mut cands: Vec<usize> = (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .filter(|&i| prominence(x, i) >= min_prom)
        .collect();

    // tallest first; index order breaks height ties
    cands.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in cands {
        if kept
            .iter()
            .all(|&k| (k as f64 - i as f64).abs() >= min_dist)
        {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Topographic prominence: height above the higher of the two bases, where
/// each base is the minimum between the peak and the nearest taller sample
/// (or the signal edge) on that side.
fn prominence(x: &[f64], i: usize) -> f64 {
    let peak = x[i];
    let mut left_min = peak;
    for j in (0..i).rev() {
        if x[j] > peak {
            break;
        }
        left_min = left_min.min(x[j]);
    }
    let mut right_min = peak;
    for &v in &x[i + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Heart rate from the mean interval between detected peaks.
///
/// The rate is clamped to the admissible band. Confidence is one minus the
/// coefficient of variation of the intervals.
pub fn hr_from_ibi(signal: &Signal) -> Result<HrEstimate> {
    let peaks = detect_peaks(signal.samples(), signal.fps());
    if peaks.len() < 2 {
        return Err(Error::InsufficientBeats { found: peaks.len() });
    }
    let fps = signal.fps() as f64;
    let intervals: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fps)
        .collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let sd =
        (intervals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / intervals.len() as f64).sqrt();
    let bpm = (60.0 / mean).clamp(60.0 * HR_BAND_LO_HZ, 60.0 * HR_BAND_HI_HZ);
    Ok(HrEstimate {
        bpm,
        method: HrMethod::Ibi,
        confidence: (1.0 - sd / mean).clamp(0.0, 1.0),
    })
}
