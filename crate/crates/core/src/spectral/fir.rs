//! Windowed-sinc low-pass design and complex decimation.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= y / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Kaiser-windowed sinc low-pass with unit DC gain.
///
/// `cutoff` and `transition` are in units of the sample rate; the stopband
/// attenuation is `atten_db`. The length is odd so the filter has an integer
/// group delay of `(len − 1)/2`.
pub(crate) fn kaiser_lowpass(cutoff: f64, transition: f64, atten_db: f64) -> Vec<f64> {
    let beta = if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    };
    let mut len = ((atten_db - 7.95) / (2.285 * 2.0 * PI * transition)).ceil() as usize + 1;
    len = len.max(3) | 1;
    let m = (len - 1) as f64 / 2.0;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (0..len)
        .map(|k| {
            let t = k as f64 - m;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let r = t / m;
            sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// Heterodynes `x` down by `f_shift` (in units of the sample rate), filters
/// with `taps` and keeps every `decim`-th output.
///
/// Only outputs with full filter support are produced. Output `j` is centred
/// on input index `first_center + j·decim`; its phase is referenced to that
/// absolute index, so a tone at `f_shift + δ` rotates at `δ` per input sample.
pub(crate) struct Decimated {
    pub z: Vec<Complex64>,
    pub first_center: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    pub decim: usize,
}

pub(crate) fn heterodyne_decimate(x: &[f64], f_shift: f64, taps: &[f64], decim: usize) -> Decimated {
    let len = taps.len();
    let half = (len - 1) / 2;
    let rot: Vec<Complex64> = taps
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            // Mixer phase relative to the filter centre.
            let ph = -2.0 * PI * f_shift * (half as f64 - k as f64);
            Complex64::from_polar(h, ph)
        })
        .collect();
    let mut z = Vec::new();
    if x.len() >= len {
        let n_out = (x.len() - len) / decim + 1;
        z.reserve(n_out);
        for j in 0..n_out {
            let start = j * decim;
            let center = start + half;
            let mut acc = Complex64::new(0.0, 0.0);
            // taps[k] multiplies x[start + len − 1 − k].
            for (k, r) in rot.iter().enumerate() {
                acc += r * x[start + len - 1 - k];
            }
            let ph = -2.0 * PI * (f_shift * center as f64).fract();
            z.push(acc * Complex64::from_polar(1.0, ph));
        }
    }
    Decimated { z, first_center: half, decim }
}
