//! Spectral analysis, entropy weighting and heart-rate extraction.

mod ibi;
mod metrics;
mod psd;
mod signal;

pub use ibi::{detect_peaks, hr_from_ibi, MAX_BPM, PROMINENCE_FRACTION};
pub use metrics::{metrics, MetricsReport};
pub(crate) use psd::twiddle;
pub use psd::{
    band_bins, band_power, entropy, entropy_weights, hr_from_psd, hr_psd, psd_band, psd_band_with,
    weights_from_entropies, BandDistribution, HrEstimate, HrMethod, PsdOptions, HR_BAND_HI_HZ,
    HR_BAND_LO_HZ,
};
pub use signal::Signal;
