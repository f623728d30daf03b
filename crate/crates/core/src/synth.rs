//! Synthetic pulse corpus: harmonic waveforms driven by an integrated
//! heart-rate trajectory, plus observation noise and baseline drift.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seeds;
use crate::sigcore::Signal;

/// Admissible heart rates for synthesis, bpm.
pub const SYNTH_HR_MIN: f64 = 45.0;
pub const SYNTH_HR_MAX: f64 = 240.0;

/// Rate multiplier of the sudden-change experiment.
pub const SUDDEN_FACTOR: f64 = 1.33;

const STREAM_HR: u64 = 1;
const STREAM_TREND: u64 = 2;
const STREAM_PHASE: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_DRIFT: u64 = 5;
const STREAM_SPLIT: u64 = 6;

/// Parameters of a single record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub fps: u32,
    pub duration_s: f64,
    /// Rate at the record midpoint.
    pub hr_bpm: f64,
    /// Linear change from start to end of the record.
    pub hr_trend_bpm: f64,
    /// Amplitudes of the fundamental and its overtones.
    pub harmonics: Vec<f64>,
    /// `None` disables the additive noise.
    pub noise_snr_db: Option<f64>,
    pub drift_amplitude: f64,
    pub drift_period_s: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            fps: 30,
            duration_s: 10.0,
            hr_bpm: 72.0,
            hr_trend_bpm: 0.0,
            harmonics: vec![1.0, 0.5, 0.25],
            noise_snr_db: None,
            drift_amplitude: 0.0,
            drift_period_s: 10.0,
        }
    }
}

/// One synthetic recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub clean: Signal,
    pub observed: Signal,
    /// Heart rate at every sample, bpm.
    pub hr_trajectory: Vec<f64>,
    pub seed: u64,
    /// Waveform phase at sample 0.
    pub phase0: f64,
    pub harmonics: Vec<f64>,
}

impl SynthRecord {
    pub fn fps(&self) -> u32 {
        self.clean.fps()
    }

    /// Mean rate over `[start_s, start_s + len_s)`.
    pub fn mean_hr(&self, start_s: f64, len_s: f64) -> f64 {
        let fps = self.fps() as f64;
        let a = (start_s * fps).round() as usize;
        let b = ((start_s + len_s) * fps).round() as usize;
        let b = b.min(self.hr_trajectory.len()).max(a + 1);
        let w = &self.hr_trajectory[a..b];
        w.iter().sum::<f64>() / w.len() as f64
    }
}

/// `sum_h a_h sin(h phi)`, `phi` integrated from `hr`.
pub fn waveform(hr: &[f64], fps: u32, phase0: f64, harmonics: &[f64]) -> Vec<f64> {
    let step = TAU / (60.0 * fps as f64);
    let mut phi = phase0;
    hr.iter()
        .map(|r| {
            let v = harmonics
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phi).sin())
                .sum();
            phi += step * r;
            v
        })
        .collect()
}

fn check_hr(hr: &[f64]) -> Result<()> {
    if let Some(bad) = hr
        .iter()
        .find(|r| !(SYNTH_HR_MIN..=SYNTH_HR_MAX).contains(*r))
    {
        return Err(Error::OutOfBand { bpm: *bad });
    }
    Ok(())
}

pub fn synth_ppg(p: &SynthParams, seed: u64) -> Result<SynthRecord> {
    if p.fps == 0 || !(p.duration_s > 0.0) || p.harmonics.is_empty() {
        return Err(Error::InvalidArgument(
            "fps, duration and harmonics must be positive".into(),
        ));
    }
    if !(p.drift_period_s > 0.0) {
        return Err(Error::InvalidArgument(
            "drift period must be positive".into(),
        ));
    }
    let n = (p.duration_s * p.fps as f64).round() as usize;
    let hr: Vec<f64> = (0..n)
        .map(|i| {
            let x = if n > 1 {
                i as f64 / (n - 1) as f64 - 0.5
            } else {
                0.0
            };
            p.hr_bpm + p.hr_trend_bpm * x
        })
        .collect();
    check_hr(&hr)?;

    let phase0 = seeds::rng(seeds::sub_seed(seed, STREAM_PHASE)).random_range(0.0..TAU);
    let clean = waveform(&hr, p.fps, phase0, &p.harmonics);

    let mut observed = clean.clone();
    if let Some(snr) = p.noise_snr_db {
        let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let sd = (power / 10f64.powf(snr / 10.0)).sqrt();
        let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = seeds::rng(seeds::sub_seed(seed, STREAM_NOISE));
        for v in &mut observed {
            *v += normal.sample(&mut rng);
        }
    }
    if p.drift_amplitude != 0.0 {
        let dphase = seeds::rng(seeds::sub_seed(seed, STREAM_DRIFT)).random_range(0.0..TAU);
        for (i, v) in observed.iter_mut().enumerate() {
            let t = i as f64 / p.fps as f64;
            *v += p.drift_amplitude * (TAU * t / p.drift_period_s + dphase).sin();
        }
    }
    Ok(SynthRecord {
        clean: Signal::new(clean, p.fps)?,
        observed: Signal::new(observed, p.fps)?,
        hr_trajectory: hr,
        seed,
        phase0,
        harmonics: p.harmonics.clone(),
    })
}

/// Composite whose last 2 s run at `factor` times the original rate.
///
/// The phase stays continuous across the 8 s boundary and the observation
/// nuisance (noise plus drift) of the original record is kept. Returns the
/// composite and the ground-truth rate of its final 2 s.
pub fn sudden_change(record: &SynthRecord, factor: f64) -> Result<(SynthRecord, f64)> {
    let fps = record.fps();
    let n = record.clean.len();
    if n != 10 * fps as usize {
        return Err(Error::InvalidArgument(format!(
            "sudden change needs a 10 s record, got {:.2} s",
            record.clean.duration_s()
        )));
    }
    if !(factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "factor {factor} must be positive"
        )));
    }
    let split = 8 * fps as usize;
    let mut hr = record.hr_trajectory.clone();
    for r in &mut hr[split..] {
        *r *= factor;
    }
    check_hr(&hr)?;
    let out = if factor == 1.0 {
        record.clone()
    } else {
        let clean = waveform(&hr, fps, record.phase0, &record.harmonics);
        let observed: Vec<f64> = record
            .observed
            .samples()
            .iter()
            .zip(record.clean.samples())
            .zip(&clean)
            .map(|((o, c), c2)| o - c + c2)
            .collect();
        SynthRecord {
            clean: Signal::new(clean, fps)?,
            observed: Signal::new(observed, fps)?,
            hr_trajectory: hr,
            ..record.clone()
        }
    };
    let gt = out.mean_hr(8.0, 2.0);
    Ok((out, gt))
}

/// Corpus recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_records: usize,
    pub fps: u32,
    pub hr_range: (f64, f64),
    /// Each record's start-to-end rate change is drawn from
    /// `[-hr_trend_bpm, hr_trend_bpm]`.
    pub hr_trend_bpm: f64,
    pub harmonics: Vec<f64>,
    pub noise_snr_db: Option<f64>,
    pub drift_amplitude: f64,
    pub drift_period_s: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_records: 200,
            fps: 30,
            hr_range: (50.0, 110.0),
            hr_trend_bpm: 0.0,
            harmonics: vec![1.0, 0.5, 0.25],
            noise_snr_db: Some(10.0),
            drift_amplitude: 0.5,
            drift_period_s: 10.0,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_records == 0 {
            return Err(Error::InvalidArgument(
                "n_records must be at least 1".into(),
            ));
        }
        let (lo, hi) = self.hr_range;
        if !(SYNTH_HR_MIN <= lo && lo <= hi && hi <= SYNTH_HR_MAX) {
            return Err(Error::InvalidArgument(format!(
                "hr_range ({lo}, {hi}) must lie within [{SYNTH_HR_MIN}, {SYNTH_HR_MAX}]"
            )));
        }
        if !(self.hr_trend_bpm >= 0.0) {
            return Err(Error::InvalidArgument(
                "hr_trend_bpm must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn record_params(&self, seed: u64) -> SynthParams {
        let (lo, hi) = self.hr_range;
        let hr = if hi > lo {
            seeds::rng(seeds::sub_seed(seed, STREAM_HR)).random_range(lo..hi)
        } else {
            lo
        };
        let trend = if self.hr_trend_bpm > 0.0 {
            seeds::rng(seeds::sub_seed(seed, STREAM_TREND))
                .random_range(-self.hr_trend_bpm..self.hr_trend_bpm)
        } else {
            0.0
        };
        // keep the whole trajectory inside the range
        let half = trend.abs() / 2.0;
        let hr = hr.clamp((lo + half).min(hi), (hi - half).max(lo));
        SynthParams {
            fps: self.fps,
            duration_s: 10.0,
            hr_bpm: hr,
            hr_trend_bpm: trend,
            harmonics: self.harmonics.clone(),
            noise_snr_db: self.noise_snr_db,
            drift_amplitude: self.drift_amplitude,
            drift_period_s: self.drift_period_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub id: String,
    pub seed: u64,
    pub hr_bpm: f64,
    pub hr_trend_bpm: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub records: Vec<RecordEntry>,
    /// SHA-256 over every record's samples, in record order.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    pub records: Vec<SynthRecord>,
}

pub fn record_id(i: usize) -> String {
    format!("rec{i:04}")
}

pub fn build_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let seeds: Vec<u64> = (0..spec.n_records)
        .map(|i| seeds::sub_seed(spec.seed, i as u64))
        .collect();
    let records = seeds
        .iter()
        .map(|&s| synth_ppg(&spec.record_params(s), s))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..spec.n_records).collect();
    order.sort_by_key(|&i| (seeds::sub_seed(seeds[i], STREAM_SPLIT), i));
    let n_train = (0.8 * spec.n_records as f64).round() as usize;
    let mut split = vec![Split::Test; spec.n_records];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }

    let entries = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let p = spec.record_params(r.seed);
            RecordEntry {
                id: record_id(i),
                seed: r.seed,
                hr_bpm: p.hr_bpm,
                hr_trend_bpm: p.hr_trend_bpm,
                split: split[i],
            }
        })
        .collect();
    let hash = corpus_hash(&records);
    Ok(Corpus {
        manifest: Manifest {
            spec: spec.clone(),
            records: entries,
            hash,
        },
        records,
    })
}

fn corpus_hash(records: &[SynthRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        for s in [&r.clean, &r.observed] {
            for v in s.samples() {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

impl Corpus {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train(&self) -> Vec<&SynthRecord> {
        self.indices(Split::Train)
            .into_iter()
            .map(|i| &self.records[i])
            .collect()
    }

    pub fn test(&self) -> Vec<&SynthRecord> {
        self.indices(Split::Test)
            .into_iter()
            .map(|i| &self.records[i])
            .collect()
    }

    /// Writes `manifest.json` and `<id>_observed.csv` / `<id>_clean.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (e, r) in self.manifest.records.iter().zip(&self.records) {
            r.observed
                .save(&dir.join(format!("{}_observed.csv", e.id)))?;
            r.clean.save(&dir.join(format!("{}_clean.csv", e.id)))?;
        }
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }

    /// Reads a saved corpus and checks its hash.
    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        manifest.spec.validate()?;
        let mut records = Vec::with_capacity(manifest.records.len());
        for e in &manifest.records {
            let observed = Signal::load(&dir.join(format!("{}_observed.csv", e.id)))?;
            let clean = Signal::load(&dir.join(format!("{}_clean.csv", e.id)))?;
            let p = manifest.spec.record_params(e.seed);
            let regenerated = synth_ppg(&p, e.seed)?;
            records.push(SynthRecord {
                clean,
                observed,
                ..regenerated
            });
        }
        let hash = corpus_hash(&records);
        if hash != manifest.hash {
            return Err(Error::InvalidArgument(format!(
                "corpus in {} does not match its manifest hash",
                dir.display()
            )));
        }
        Ok(Corpus { manifest, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::hr_psd;

    #[test]
    fn clean_tone_peaks_at_its_rate() {
        let r = synth_ppg(&SynthParams::default(), 3).unwrap();
        assert_eq!(r.clean.len(), 300);
        assert_eq!(r.observed, r.clean);
        let est = hr_psd(&r.clean).unwrap();
        assert!((est.bpm - 72.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_record() {
        let p = SynthParams {
            noise_snr_db: Some(5.0),
            drift_amplitude: 0.3,
            ..SynthParams::default()
        };
        assert_eq!(synth_ppg(&p, 9).unwrap(), synth_ppg(&p, 9).unwrap());
        assert_ne!(
            synth_ppg(&p, 9).unwrap().observed,
            synth_ppg(&p, 10).unwrap().observed
        );
    }

    #[test]
    fn out_of_band_rate_is_rejected() {
        let p = SynthParams {
            hr_bpm: 30.0,
            ..SynthParams::default()
        };
        assert!(matches!(synth_ppg(&p, 1), Err(Error::OutOfBand { .. })));
    }

    #[test]
    fn sudden_change_reference_cases() {
        let r = synth_ppg(&SynthParams::default(), 4).unwrap();
        let (c, gt) = sudden_change(&r, SUDDEN_FACTOR).unwrap();
        assert!((gt - 95.76).abs() < 1e-9);
        assert_eq!(&c.clean.samples()[..240], &r.clean.samples()[..240]);
        let (same, gt1) = sudden_change(&r, 1.0).unwrap();
        assert_eq!(same, r);
        assert_eq!(gt1, 72.0);
        let fast = synth_ppg(
            &SynthParams {
                hr_bpm: 200.0,
                ..SynthParams::default()
            },
            4,
        )
        .unwrap();
        assert!(matches!(
            sudden_change(&fast, SUDDEN_FACTOR),
            Err(Error::OutOfBand { .. })
        ));
    }

    #[test]
    fn corpus_split_and_hash() {
        let spec = CorpusSpec {
            n_records: 10,
            seed: 5,
            ..CorpusSpec::default()
        };
        let a = build_corpus(&spec).unwrap();
        assert_eq!(a.train().len(), 8);
        assert_eq!(a.test().len(), 2);
        let b = build_corpus(&spec).unwrap();
        assert_eq!(a.manifest.hash, b.manifest.hash);
        let other = build_corpus(&CorpusSpec {
            seed: 6,
            ..spec.clone()
        })
        .unwrap();
        assert_ne!(a.manifest.hash, other.manifest.hash);
        for r in &a.records {
            assert!(r.hr_trajectory.iter().all(|h| (50.0..=110.0).contains(h)));
        }
    }

    #[test]
    fn corpus_survives_disk_round_trip() {
        let spec = CorpusSpec {
            n_records: 5,
            hr_trend_bpm: 8.0,
            ..CorpusSpec::default()
        };
        let c = build_corpus(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back, c);
    }
}
