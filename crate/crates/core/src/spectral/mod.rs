//! Power spectral density estimation and the measurement observables built
//! on it.
//!
//! All spectra are one-sided densities in (input unit)²/Hz on a frequency
//! grid in Hz, so that a white detection floor reads directly as `S_xn`.

mod fir;
mod welch;
mod zerospan;
mod zoom;

pub use welch::{welch_psd, WelchAccumulator};
pub use zerospan::{zero_span_trace, ZeroSpanOptions, ZeroSpanTrace};
pub use zoom::zoom_psd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equivalent noise bandwidth of the Hann window in bins.
pub const HANN_ENBW: f64 = 1.5;

/// Power response of the Hann window sampled over ±6 bins, as
/// (frequency offset in Hz, weight) pairs with unit total weight. An
/// averaged Hann estimate with equivalent noise bandwidth `resolution_bw`
/// expects `Σ w·S(f + δ)` at `f`. Returns a single unit tap when
/// `resolution_bw` is zero.
pub fn window_kernel(resolution_bw: f64) -> Vec<(f64, f64)> {
    if !(resolution_bw > 0.0) {
        return vec![(0.0, 1.0)];
    }
    let bin = resolution_bw / HANN_ENBW;
    let amp = |u: f64| {
        if u.abs() < 1e-9 {
            1.0
        } else if (u.abs() - 1.0).abs() < 1e-9 {
            0.5
        } else {
            (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u * (1.0 - u * u))
        }
    };
    let taps: Vec<(f64, f64)> = (-48..=48).map(|k| k as f64 / 8.0).map(|u| (u * bin, amp(u).powi(2))).collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    taps.into_iter().map(|(d, w)| (d, w / total)).collect()
}

/// Expected value of a Hann estimate of the density `s` at `f`.
pub fn smoothed(f: f64, kernel: &[(f64, f64)], s: impl Fn(f64) -> f64) -> f64 {
    kernel.iter().map(|(d, w)| w * s(f + d)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Hz, strictly increasing and uniform.
    pub freq: Vec<f64>,
    pub psd: Vec<f64>,
    pub n_averages: usize,
    /// Equivalent noise bandwidth of the estimator, Hz.
    pub resolution_bw: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    /// Grid spacing in Hz.
    pub fn df(&self) -> f64 {
        if self.freq.len() < 2 {
            0.0
        } else {
            self.freq[1] - self.freq[0]
        }
    }

    /// Bins with `lo ≤ f ≤ hi`.
    pub fn slice(&self, lo: f64, hi: f64) -> Spectrum {
        let (freq, psd) = self
            .freq
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(f, s)| (*f, *s))
            .unzip();
        Spectrum {
            freq,
            psd,
            n_averages: self.n_averages,
            resolution_bw: self.resolution_bw,
        }
    }

    /// Linear interpolation of the density at `f` (clamped to the grid).
    pub fn interpolate(&self, f: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        if f <= self.freq[0] {
            return self.psd[0];
        }
        if f >= self.freq[n - 1] {
            return self.psd[n - 1];
        }
        let i = self.freq.partition_point(|&x| x <= f) - 1;
        let w = (f - self.freq[i]) / (self.freq[i + 1] - self.freq[i]);
        self.psd[i] + w * (self.psd[i + 1] - self.psd[i])
    }

    /// Index of the largest density.
    pub fn peak_index(&self) -> Option<usize> {
        self.psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Trapezoidal integral of the density over `[f_lo, f_hi]` Hz, with the
/// band edges interpolated onto the grid. A band that only partly overlaps
/// the grid is clipped to it.
pub fn band_power(s: &Spectrum, f_lo: f64, f_hi: f64) -> Result<f64> {
    let n = s.len();
    if n < 2 || !(f_lo <= f_hi) {
        return Err(Error::EmptyBand { lo: f_lo, hi: f_hi });
    }
    let lo = f_lo.max(s.freq[0]);
    let hi = f_hi.min(s.freq[n - 1]);
    if lo > hi {
        return Err(Error::EmptyBand { lo: f_lo, hi: f_hi });
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut pts = vec![(lo, s.interpolate(lo))];
    pts.extend(
        s.freq
            .iter()
            .zip(&s.psd)
            .filter(|(f, _)| **f > lo && **f < hi)
            .map(|(f, p)| (*f, *p)),
    );
    pts.push((hi, s.interpolate(hi)));
    Ok(pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum())
}
