//! Digital band selection and the diagnostics used to validate it.
//!
//! An ideal brick-wall band of width `B` gives filtered noise an
//! autocorrelation with a `sinc(πBτ)` envelope. Keeping one sample every
//! `fs/B` lands on the first zero of that envelope, so the downsampled
//! stream is decorrelated.

mod correlation;
mod filter;
mod psd;

pub use correlation::{autocorrelation, AutocorrAccumulator};
pub use filter::{
    bandpass_brickwall, decimation_factor, decorrelating_downsample,
    decorrelating_downsample_with_phase, BandFilter,
};
pub use psd::{band_gap_db, welch_psd, PsdEstimate};

use crate::error::{Error, Result};

/// Pass band `[f_lo, f_hi]` in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandSpec {
    /// 1.25 GHz wide band centered on 875 MHz.
    pub const DEFAULT: BandSpec = BandSpec {
        f_lo: 250e6,
        f_hi: 1.5e9,
    };

    pub fn new(f_lo: f64, f_hi: f64) -> Result<Self> {
        let b = BandSpec { f_lo, f_hi };
        if !(f_lo.is_finite() && f_hi.is_finite() && f_lo >= 0.0 && f_lo < f_hi) {
            return Err(Error::invalid(
                "band",
                format!("need 0 <= f_lo < f_hi, got [{f_lo}, {f_hi}]"),
            ));
        }
        Ok(b)
    }

    pub fn validate_for(&self, sample_rate: f64) -> Result<()> {
        BandSpec::new(self.f_lo, self.f_hi)?;
        if self.f_hi > sample_rate / 2.0 * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "band",
                format!(
                    "f_hi = {} Hz exceeds the Nyquist frequency {} Hz",
                    self.f_hi,
                    sample_rate / 2.0
                ),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.f_hi - self.f_lo
    }

    /// Inclusive range of real-FFT bins (of an `n`-point transform) inside
    /// the band. The DC bin is always excluded.
    pub(crate) fn bin_range(&self, n: usize, sample_rate: f64) -> (usize, usize) {
        let df = sample_rate / n as f64;
        let tol = 1e-9;
        let lo = ((self.f_lo / df) - tol).ceil().max(1.0) as usize;
        let hi = ((self.f_hi / df) + tol).floor().min((n / 2) as f64) as usize;
        (lo, hi)
    }

    pub(crate) fn contains(&self, f: f64) -> bool {
        let tol = 1e-9 * self.f_hi;
        f >= self.f_lo - tol && f <= self.f_hi + tol
    }
}
