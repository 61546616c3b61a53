use num_complex::Complex64;
use rustfft::FftPlanner;

use super::fir::{heterodyne_decimate, kaiser_lowpass};
use super::welch::hann;
use super::{Spectrum, HANN_ENBW};
use crate::error::{Error, Result};

/// Narrow-band spectrum around `f_center` (Hz).
///
/// The series is mixed down by `f_center`, low-passed and decimated so that
/// the baseband rate is at least 1.5·`span`, and the complex baseband is
/// Welch-averaged (Hann, 50 % overlap) with segments long enough to reach
/// `resolution_bw` (equivalent noise bandwidth, Hz). The result covers
/// `f_center ± span/2` on the same density scale as [`super::welch_psd`].
pub fn zoom_psd(series: &[f64], sample_rate: f64, f_center: f64, span: f64, resolution_bw: f64) -> Result<Spectrum> {
    let nyq = 0.5 * sample_rate;
    if !(span > 0.0 && resolution_bw > 0.0) {
        return Err(Error::param("span", "span and resolution_bw must be > 0"));
    }
    if !(f_center - 0.5 * span > 0.0 && f_center + 0.5 * span < nyq) {
        return Err(Error::param("f_center", format!("band {f_center} ± {} Hz leaves (0, {nyq}) Hz", 0.5 * span)));
    }
    if resolution_bw > 0.5 * span {
        return Err(Error::param("resolution_bw", "must be well below the span"));
    }

    let decim = ((sample_rate / (1.5 * span)).floor() as usize).max(1);
    let fs_d = sample_rate / decim as f64;
    let nseg = ((HANN_ENBW * fs_d / resolution_bw).ceil() as usize).max(8);
    let taps = if decim > 1 {
        // Pass ±span/2 flat; reject everything that would alias into it.
        let pass = 0.5 * span / sample_rate;
        let stop = (fs_d - 0.5 * span) / sample_rate;
        kaiser_lowpass(0.5 * (pass + stop), stop - pass, 90.0)
    } else {
        vec![1.0]
    };
    let min_len = taps.len() + (nseg - 1) * decim;
    if series.len() < min_len {
        return Err(Error::SeriesTooShort { needed: min_len, got: series.len() });
    }

    let base = heterodyne_decimate(series, f_center / sample_rate, &taps, decim);
    let z = base.z;
    let window = hann(nseg);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nseg);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut work = vec![Complex64::default(); nseg];
    let mut sum = vec![0.0; nseg];
    let step = nseg / 2;
    let mut count = 0usize;
    let mut start = 0;
    while start + nseg <= z.len() {
        for ((w, v), win) in work.iter_mut().zip(&z[start..start + nseg]).zip(&window) {
            *w = v * win;
        }
        fft.process_with_scratch(&mut work, &mut scratch);
        for (s, w) in sum.iter_mut().zip(&work) {
            *s += w.norm_sqr();
        }
        count += 1;
        start += step;
    }

    // The mixed-down signal carries half of each real line.
    let scale = 2.0 / (fs_d * win_power * count as f64);
    let df = fs_d / nseg as f64;
    let half = nseg as isize / 2;
    let mut freq = Vec::new();
    let mut psd = Vec::new();
    for k in -half..(nseg as isize - half) {
        let off = k as f64 * df;
        if off.abs() <= 0.5 * span {
            freq.push(f_center + off);
            psd.push(sum[k.rem_euclid(nseg as isize) as usize] * scale);
        }
    }
    Ok(Spectrum {
        freq,
        psd,
        n_averages: count,
        resolution_bw: HANN_ENBW * df,
    })
}
