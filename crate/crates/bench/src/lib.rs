//! Benchmark fixtures shared by the criterion targets.

use pgsr_core::sigcore::Signal;

/// A 1.2 Hz tone with a small overtone, `secs` long at `fps`.
pub fn tone(secs: f64, fps: u32) -> Signal {
    let n = (secs * fps as f64).round() as usize;
    Signal::new(
        (0..n)
            .map(|i| {
                let t = i as f64 / fps as f64;
                (std::f64::consts::TAU * 1.2 * t).sin()
                    + 0.3 * (std::f64::consts::TAU * 2.4 * t).sin()
            })
            .collect(),
        fps,
    )
    .expect("valid tone")
}
