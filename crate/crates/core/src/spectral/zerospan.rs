use serde::{Deserialize, Serialize};

use super::fir::{heterodyne_decimate, kaiser_lowpass};
use crate::consts::K_B;
use crate::error::{Error, Result};
use crate::model::MembraneParams;

/// Band temperature versus time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSpanTrace {
    /// Bin centres, s.
    pub t: Vec<f64>,
    /// K.
    pub temperature: Vec<f64>,
    /// Hz.
    pub center_freq: f64,
    /// Hz.
    pub bandwidth: f64,
}

impl ZeroSpanTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Bin spacing, s.
    pub fn time_resolution(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Element-wise mean of traces sharing the same grid.
    pub fn average(traces: &[ZeroSpanTrace]) -> Result<ZeroSpanTrace> {
        let first = traces.first().ok_or_else(|| Error::InvalidInput("no traces to average".into()))?;
        let mut temperature = vec![0.0; first.len()];
        for tr in traces {
            if tr.len() != first.len() {
                return Err(Error::InvalidInput("traces differ in length".into()));
            }
            temperature.iter_mut().zip(&tr.temperature).for_each(|(a, b)| *a += b);
        }
        let n = traces.len() as f64;
        temperature.iter_mut().for_each(|a| *a /= n);
        Ok(ZeroSpanTrace { temperature, ..first.clone() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZeroSpanOptions {
    /// Time of the first input sample, s.
    pub t0: f64,
    /// Subtract the band power of white detection noise with this one-sided
    /// density (m²/Hz).
    pub subtract_noise: Option<f64>,
}

/// Zero-span trace: band power within `f_center ± bandwidth/2` (Hz), binned
/// in `time_resolution` (s) and converted to a mode temperature.
///
/// The band is selected by mixing to baseband and applying a linear-phase
/// low-pass, so each bin reflects the band power centred on its time stamp.
/// Bins are only produced where the filter has full support.
pub fn zero_span_trace(
    series: &[f64],
    sample_rate: f64,
    f_center: f64,
    bandwidth: f64,
    time_resolution: f64,
    p: &MembraneParams,
    opts: ZeroSpanOptions,
) -> Result<ZeroSpanTrace> {
    if !(bandwidth > 0.0) {
        return Err(Error::param("bandwidth", "must be > 0"));
    }
    if !(f_center - 0.5 * bandwidth > 0.0 && f_center + 0.5 * bandwidth < 0.5 * sample_rate) {
        return Err(Error::param("f_center", "band must lie inside (0, Nyquist)"));
    }
    if !(time_resolution >= 2.0 / bandwidth) {
        return Err(Error::param(
            "time_resolution",
            format!("must be at least 2/bandwidth = {} s", 2.0 / bandwidth),
        ));
    }

    let cutoff = 0.5 * bandwidth / sample_rate;
    // A narrow transition keeps the noise bandwidth close to `bandwidth`.
    let taps = kaiser_lowpass(cutoff, 0.25 * cutoff, 60.0);
    let decim = ((sample_rate / (2.0 * bandwidth)).floor() as usize).max(1);
    let per_bin = ((time_resolution * sample_rate / decim as f64).round() as usize).max(1);
    let needed = taps.len() + per_bin * decim;
    if series.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: series.len() });
    }

    let base = heterodyne_decimate(series, f_center / sample_rate, &taps, decim);
    let noise = opts
        .subtract_noise
        .map_or(0.0, |s| s * sample_rate * taps.iter().map(|h| h * h).sum::<f64>());
    let k_over_kb = p.spring_constant() / K_B;
    let dt = 1.0 / sample_rate;

    let mut t = Vec::new();
    let mut temperature = Vec::new();
    for (j, chunk) in base.z.chunks_exact(per_bin).enumerate() {
        let power = 2.0 * chunk.iter().map(|z| z.norm_sqr()).sum::<f64>() / per_bin as f64 - noise;
        let mid = base.first_center as f64 + (j * per_bin) as f64 * decim as f64 + 0.5 * ((per_bin - 1) * decim) as f64;
        t.push(opts.t0 + mid * dt);
        temperature.push((k_over_kb * power).max(0.0));
    }
    Ok(ZeroSpanTrace {
        t,
        temperature,
        center_freq: f_center,
        bandwidth,
    })
}
