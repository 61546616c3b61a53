use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Spectrum, HANN_ENBW};
use crate::error::{Error, Result};

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

fn check_segment(segment_len: usize, overlap_frac: f64) -> Result<usize> {
    if segment_len < 4 {
        return Err(Error::param("segment_len", "must be at least 4"));
    }
    if !(0.0..=0.9).contains(&overlap_frac) {
        return Err(Error::param("overlap_frac", format!("must lie in [0, 0.9], got {overlap_frac}")));
    }
    let step = segment_len - (overlap_frac * segment_len as f64).round() as usize;
    Ok(step.max(1))
}

/// Welch estimate with a Hann window, per-segment mean removal and density
/// scaling.
///
/// Mean removal discards roughly 1.5/`segment_len` of the power of a white
/// input, which is the main departure from exact Parseval closure.
pub fn welch_psd(series: &[f64], sample_rate: f64, segment_len: usize, overlap_frac: f64) -> Result<Spectrum> {
    if series.len() < segment_len {
        return Err(Error::SeriesTooShort { needed: segment_len, got: series.len() });
    }
    let mut acc = WelchAccumulator::new(sample_rate, segment_len, overlap_frac)?;
    acc.extend(series);
    acc.finish()
}

/// Incremental Welch estimator for series too long to hold in memory.
///
/// Samples are pushed one at a time; each completed segment is transformed
/// and folded into a running sum of periodograms.
pub struct WelchAccumulator {
    fs: f64,
    nseg: usize,
    step: usize,
    window: Vec<f64>,
    win_power: f64,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<f64>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
    sum: Vec<f64>,
    count: usize,
}

impl WelchAccumulator {
    pub fn new(sample_rate: f64, segment_len: usize, overlap_frac: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::param("sample_rate", "must be > 0"));
        }
        let step = check_segment(segment_len, overlap_frac)?;
        let window = hann(segment_len);
        let win_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            fs: sample_rate,
            nseg: segment_len,
            step,
            window,
            win_power,
            fft,
            buf: Vec::with_capacity(segment_len),
            work: vec![Complex64::default(); segment_len],
            scratch,
            sum: vec![0.0; segment_len / 2 + 1],
            count: 0,
        })
    }

    pub fn push(&mut self, x: f64) {
        self.buf.push(x);
        if self.buf.len() == self.nseg {
            self.process();
            if self.step >= self.nseg {
                self.buf.clear();
            } else {
                self.buf.drain(..self.step);
            }
        }
    }

    pub fn extend(&mut self, xs: &[f64]) {
        for &x in xs {
            self.push(x);
        }
    }

    fn process(&mut self) {
        let mean = self.buf.iter().sum::<f64>() / self.nseg as f64;
        for ((w, b), win) in self.work.iter_mut().zip(&self.buf).zip(&self.window) {
            *w = Complex64::new((b - mean) * win, 0.0);
        }
        self.fft.process_with_scratch(&mut self.work, &mut self.scratch);
        for (s, w) in self.sum.iter_mut().zip(&self.work) {
            *s += w.norm_sqr();
        }
        self.count += 1;
    }

    pub fn n_averages(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Result<Spectrum> {
        if self.count == 0 {
            return Err(Error::SeriesTooShort { needed: self.nseg, got: self.buf.len() });
        }
        let scale = 2.0 / (self.fs * self.win_power * self.count as f64);
        let last = self.sum.len() - 1;
        let psd = self
            .sum
            .iter()
            .enumerate()
            .map(|(k, s)| {
                // DC and Nyquist have no mirror image.
                if k == 0 || (k == last && self.nseg % 2 == 0) {
                    0.5 * s * scale
                } else {
                    s * scale
                }
            })
            .collect();
        let df = self.fs / self.nseg as f64;
        Ok(Spectrum {
            freq: (0..self.sum.len()).map(|k| k as f64 * df).collect(),
            psd,
            n_averages: self.count,
            resolution_bw: HANN_ENBW * df,
        })
    }
}
