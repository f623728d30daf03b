use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled 1-D waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    fps: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, fps: u32) -> Result<Self> {
        if fps == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidSignal(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("non-finite sample".into()));
        }
        Ok(Self { samples, fps })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fps(&self) -> u32 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fps as f64
    }

    /// Samples `[start_s, start_s + len_s)` as a new signal.
    pub fn window(&self, start_s: f64, len_s: f64) -> Result<Signal> {
        let start = (start_s * self.fps as f64).round() as usize;
        let len = (len_s * self.fps as f64).round() as usize;
        if start + len > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {}) exceeds signal length {}",
                start + len,
                self.samples.len()
            )));
        }
        Signal::new(self.samples[start..start + len].to_vec(), self.fps)
    }

    /// Zero-mean, unit-variance copy. A constant signal maps to zeros.
    pub fn standardized(&self) -> Signal {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        let var = self.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let samples = if sd > 0.0 {
            self.samples.iter().map(|v| (v - mean) / sd).collect()
        } else {
            vec![0.0; self.samples.len()]
        };
        Signal {
            samples,
            fps: self.fps,
        }
    }

    /// Writes the `fps=<int>` header followed by one sample per line.
    ///
    /// Samples use the shortest round-trip decimal form, so reading the file
    /// back yields bit-identical values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "fps={}", self.fps)?;
        for v in &self.samples {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Signal> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty signal file".into()))??;
        let fps = header
            .trim()
            .strip_prefix("fps=")
            .ok_or_else(|| Error::Parse(format!("expected `fps=<int>` header, got `{header}`")))?
            .parse::<u32>()
            .map_err(|e| Error::Parse(format!("bad fps: {e}")))?;
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v = line
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
            samples.push(v);
        }
        Signal::new(samples, fps)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Signal> {
        let f = std::fs::File::open(path)?;
        Signal::read_csv(std::io::BufReader::new(f))
    }
}
