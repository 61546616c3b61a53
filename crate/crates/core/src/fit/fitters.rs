use std::f64::consts::PI;

use super::lm::{least_squares, LsqOptions, Param};
use super::{FitFlag, FitResult};
use crate::consts::TWO_PI;
use crate::error::{Error, Result};
use crate::model::{
    decay_trace_relaxing, final_temperature_combined, noise_heating_coefficient, optimal_feedback_gain_combined,
    psd_in_loop, thermal_force_psd, CoolingGains, DetectionParams, MembraneParams,
};
use crate::spectral::{smoothed, window_kernel, Spectrum, ZeroSpanTrace};

/// Upper bound on fitted feedback gains.
pub const MAX_GAIN: f64 = 1e7;

/// Straight line `slope·x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<FitResult> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::InvalidInput("a line needs at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope0 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let params = [Param::new("slope", slope0), Param::new("intercept", my - slope0 * mx)];
    least_squares(|x, p| p[0] * x + p[1], x, y, None, &params, &LsqOptions::default())
}

/// Fits the cooldown law to a zero-span trace whose feedback (or
/// sympathetic) step happens at t = 0. Bins before the step constrain the
/// bath temperature.
///
/// Parameters: `g`, `t_bath`.
pub fn fit_cooldown(trace: &ZeroSpanTrace, gamma_m: f64) -> Result<FitResult> {
    if trace.len() < 3 {
        return Err(Error::SeriesTooShort { needed: 3, got: trace.len() });
    }
    if !(gamma_m > 0.0) {
        return Err(Error::param("gamma_m", "must be > 0"));
    }
    let t = &trace.t;
    let y = &trace.temperature;
    let before: Vec<f64> = t.iter().zip(y).filter(|(t, _)| **t < 0.0).map(|(_, y)| *y).collect();
    let after: Vec<f64> = t.iter().zip(y).filter(|(t, _)| **t >= 0.0).map(|(_, y)| *y).collect();
    if after.len() < 2 {
        return Err(Error::InvalidInput("trace has no samples after the step at t = 0".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let t_b0 = if before.is_empty() { after[0] } else { mean(&before) }.max(f64::MIN_POSITIVE);
    let tail = &after[after.len() - (after.len() / 5).max(1)..];
    let g0 = (t_b0 / mean(tail).max(1e-300) - 1.0).clamp(0.0, MAX_GAIN);

    let model = |t: f64, p: &[f64]| {
        let (g, tb) = (p[0], p[1]);
        if t < 0.0 {
            tb
        } else {
            tb / (1.0 + g) * (1.0 + g * (-gamma_m * (1.0 + g) * t).exp())
        }
    };
    let params = [
        Param::bounded("g", g0, 0.0, MAX_GAIN),
        Param::bounded("t_bath", t_b0, 0.0, f64::INFINITY),
    ];
    let mut fit = least_squares(model, t, y, None, &params, &LsqOptions::default())?;
    let g = fit.params["g"];
    let span = t.last().unwrap() - t[0].max(0.0);
    if span * gamma_m * (1.0 + g) < 3.0 {
        fit.flag(FitFlag::TraceTooShort);
    }
    if g < 1e-3 || fit.stderr_of("g").is_some_and(|se| se > g) {
        fit.flag(FitFlag::Degenerate);
    }
    Ok(fit)
}

/// Closed-form feedback gain that reproduces the in-loop density at ω_m.
fn inloop_gain_from_peak(s_peak: f64, p: &MembraneParams, d: &DetectionParams, g_s: f64) -> f64 {
    let a = p.mass * p.omega_m * p.gamma_m;
    let total2 = (thermal_force_psd(p) + (a * (1.0 + g_s)).powi(2) * d.s_xn) / (a * a * s_peak);
    (total2.sqrt() - 1.0 - g_s).clamp(0.0, MAX_GAIN)
}

/// In-loop spectrum fit with `g_v` as the only free parameter; every other
/// quantity, including the fixed sympathetic gain `g_s`, is taken as known.
/// The model is smoothed by the Hann kernel of the spectrum's
/// `resolution_bw` (zero means an exact, unsmoothed density).
///
/// The starting value inverts the analytic density at ω_m.
pub fn fit_inloop_spectrum(s: &Spectrum, p: &MembraneParams, d: &DetectionParams, g_s: f64) -> Result<FitResult> {
    let f_m = p.omega_m / TWO_PI;
    if s.is_empty() || f_m < s.freq[0] || f_m > *s.freq.last().unwrap() {
        return Err(Error::InvalidInput("spectrum does not cover the resonance".into()));
    }
    let init = inloop_gain_from_peak(s.interpolate(f_m), p, d, g_s);
    fit_inloop_spectrum_from(s, p, d, g_s, init)
}

/// [`fit_inloop_spectrum`] with an explicit starting gain.
pub fn fit_inloop_spectrum_from(
    s: &Spectrum,
    p: &MembraneParams,
    d: &DetectionParams,
    g_s: f64,
    init: f64,
) -> Result<FitResult> {
    let (f, y): (Vec<f64>, Vec<f64>) = s
        .freq
        .iter()
        .zip(&s.psd)
        .filter(|(f, y)| **f > 0.0 && **y > 0.0)
        .map(|(f, y)| (*f, *y))
        .unzip();
    // Compare against what the estimator sees: the squashing notch can be
    // narrower than the resolution bandwidth.
    let kernel = window_kernel(s.resolution_bw);
    let model =
        |f: f64, q: &[f64]| smoothed(f, &kernel, |f| psd_in_loop(TWO_PI * f.abs(), p, d, CoolingGains::new(q[0], g_s)));
    let params = [Param::bounded("g_v", init.clamp(0.0, MAX_GAIN), 0.0, MAX_GAIN)];
    let mut fit = least_squares(model, &f, &y, None, &params, &LsqOptions::log())?;
    let g_v = fit.params["g_v"];
    let linewidth = p.gamma_m * (1.0 + g_v + g_s) / TWO_PI;
    let span = f.last().unwrap() - f[0];
    if span < 10.0 * linewidth {
        fit.flag(FitFlag::NarrowCoverage);
    }
    Ok(fit)
}

/// Out-of-loop temperature implied by a fitted in-loop gain.
pub fn extract_final_temperature(fit: &FitResult, p: &MembraneParams, d: &DetectionParams, g_s: f64) -> Result<f64> {
    let g_v = fit.get("g_v")?;
    Ok(final_temperature_combined(p, d, CoolingGains::new(g_v, g_s)))
}

/// Fits final temperature versus feedback gain, at fixed sympathetic gain
/// `g_s`, for the bath temperature and the detection-noise density.
///
/// Residuals are relative (σ_i = T_i) because the temperatures span decades.
/// Parameters: `t_bath`, `s_xn`; derived: `g_opt`, `t_min`.
pub fn fit_gain_temperature_curve(points: &[(f64, f64)], p: &MembraneParams, g_s: f64) -> Result<FitResult> {
    if points.len() < 5 {
        return Err(Error::SeriesTooShort { needed: 5, got: points.len() });
    }
    if points.iter().any(|(g, t)| !(*g >= 0.0 && *t > 0.0)) {
        return Err(Error::InvalidInput("gains must be ≥ 0 and temperatures > 0".into()));
    }
    let c = noise_heating_coefficient(p);
    let basis = |g: f64| {
        let tot = 1.0 + g + g_s;
        (1.0 / tot, c * g * g / tot)
    };

    // Weighted linear least squares gives the exact starting point.
    let (mut aa, mut ab, mut bb, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(g, t) in points {
        let (a, b) = basis(g);
        let (a, b) = (a / t, b / t);
        aa += a * a;
        ab += a * b;
        bb += b * b;
        ay += a;
        by += b;
    }
    let det = aa * bb - ab * ab;
    let (mut tb0, mut s0) = if det.abs() > 1e-300 {
        ((ay * bb - by * ab) / det, (aa * by - ab * ay) / det)
    } else {
        (ay / aa, 0.0)
    };
    if !(tb0 > 0.0) {
        tb0 = points.iter().map(|x| x.1).fold(0.0, f64::max);
    }
    s0 = s0.max(0.0);

    let g: Vec<f64> = points.iter().map(|x| x.0).collect();
    let t: Vec<f64> = points.iter().map(|x| x.1).collect();
    let model = |g: f64, q: &[f64]| {
        let (a, b) = basis(g);
        q[0] * a + q[1] * b
    };
    let params = [
        Param::bounded("t_bath", tb0, 0.0, f64::INFINITY),
        Param::bounded("s_xn", s0, 0.0, f64::INFINITY),
    ];
    let mut fit = least_squares(model, &g, &t, Some(&t), &params, &LsqOptions::default())?;

    let p_fit = p.with_t_bath(fit.params["t_bath"]);
    let d_fit = DetectionParams { s_xn: fit.params["s_xn"] };
    match optimal_feedback_gain_combined(&p_fit, &d_fit, g_s) {
        Ok(opt) => {
            fit.derive("g_opt", opt.g_opt, None);
            fit.derive("t_min", opt.t_min, None);
            let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
            if opt.g_opt < lo || opt.g_opt > hi {
                fit.flag(FitFlag::Extrapolated);
            }
        }
        Err(_) => fit.flag(FitFlag::Extrapolated),
    }
    Ok(fit)
}

/// Sympathetic damping rate versus atom frequency with g_N ∝ ω_a^{3/2}:
/// `scale` is g_N at ω_a = ω_m.
pub fn sympathetic_resonance_model(omega_a: f64, g_n_scale: f64, gamma_a: f64, omega_m: f64) -> f64 {
    let g_n = g_n_scale * (omega_a / omega_m).powf(1.5);
    let det = omega_a - omega_m;
    g_n * g_n * gamma_a / (det * det + 0.25 * gamma_a * gamma_a)
}

/// Full width at half maximum of sampled data around its largest value,
/// with linear interpolation of the crossings. `None` if either side never
/// drops below half.
fn half_width(x: &[f64], y: &[f64], floor: f64) -> Option<f64> {
    let i = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?.0;
    let half = floor + 0.5 * (y[i] - floor);
    let cross = |a: usize, b: usize| x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
    let left = (0..i).rev().find(|&j| y[j] < half).map(|j| cross(j, j + 1))?;
    let right = (i + 1..y.len()).find(|&j| y[j] < half).map(|j| cross(j - 1, j))?;
    Some(right - left)
}

/// Fits the sympathetic resonance (ω_a in rad/s, Γ_sym in s⁻¹).
///
/// Parameters: `g_n_scale`, `gamma_a`, `omega_m`; derived:
/// `gamma_a_over_omega_m`. The starting width is the half-maximum width of
/// the data.
pub fn fit_sympathetic_resonance(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 5 {
        return Err(Error::SeriesTooShort { needed: 5, got: points.len() });
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let imax = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let wm0 = x[imax];
    let span = x.last().unwrap() - x[0];
    let ga0 = half_width(&x, &y, 0.0).unwrap_or(0.25 * span).max(1e-6 * wm0);
    let s0 = (y[imax] * ga0 / 4.0).max(f64::MIN_POSITIVE).sqrt();
    let params = [
        Param::bounded("g_n_scale", s0, 0.0, f64::INFINITY),
        Param::bounded("gamma_a", ga0, 0.0, f64::INFINITY),
        Param::bounded("omega_m", wm0, 0.0, f64::INFINITY),
    ];
    let mut fit = least_squares(
        |w, q| sympathetic_resonance_model(w, q[0], q[1], q[2]),
        &x,
        &y,
        None,
        &params,
        &LsqOptions::default(),
    )?;
    let (ga, wm) = (fit.params["gamma_a"], fit.params["omega_m"]);
    let rel = match (fit.stderr_of("gamma_a"), fit.stderr_of("omega_m")) {
        (Some(a), Some(b)) => Some(ga / wm * ((a / ga).powi(2) + (b / wm).powi(2)).sqrt()),
        _ => None,
    };
    fit.derive("gamma_a_over_omega_m", ga / wm, rel);
    Ok(fit)
}

/// Lorentzian peak on a white floor, in Hz:
/// `floor + height·(fwhm/2)²/((f − f0)² + (fwhm/2)²)`.
pub fn lorentzian(f: f64, f0: f64, fwhm: f64, height: f64, floor: f64) -> f64 {
    let hw2 = 0.25 * fwhm * fwhm;
    floor + height * hw2 / ((f - f0).powi(2) + hw2)
}

/// Lorentzian-plus-floor fit in log density.
///
/// Parameters: `f0`, `fwhm` (Hz), `height`, `floor`. Flags `NoPeak` when the
/// smoothed maximum does not rise to three times the median level.
pub fn estimate_linewidth(s: &Spectrum) -> Result<FitResult> {
    let (f, y): (Vec<f64>, Vec<f64>) = s
        .freq
        .iter()
        .zip(&s.psd)
        .filter(|(_, y)| **y > 0.0)
        .map(|(f, y)| (*f, *y))
        .unzip();
    if f.len() < 8 {
        return Err(Error::SeriesTooShort { needed: 8, got: f.len() });
    }
    let smooth: Vec<f64> = (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let floor0 = sorted[sorted.len() / 10];
    let ipk = smooth.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let peak = smooth[ipk];
    let df = f[1] - f[0];
    let span = f.last().unwrap() - f[0];
    let fwhm0 = half_width(&f, &smooth, floor0).unwrap_or(0.1 * span).max(df);
    let params = [
        Param::bounded("f0", f[ipk], f[0], *f.last().unwrap()),
        Param::bounded("fwhm", fwhm0, 1e-3 * df, 2.0 * span),
        Param::bounded("height", (peak - floor0).max(f64::MIN_POSITIVE), 0.0, f64::INFINITY),
        Param::bounded("floor", floor0, 0.0, f64::INFINITY),
    ];
    let mut fit = least_squares(
        |x, q| lorentzian(x, q[0], q[1], q[2], q[3]),
        &f,
        &y,
        None,
        &params,
        &LsqOptions::log(),
    )?;
    if peak < 3.0 * median {
        fit.flag(FitFlag::NoPeak);
    }
    Ok(fit)
}

/// Membrane temperature while the atom number decays exponentially,
/// `T_b / (1 + g_s0·e^{−t/τ})`.
///
/// Parameters: `t_bath`, `g_s0`, `tau`.
pub fn fit_atom_decay(t: &[f64], temperature: &[f64]) -> Result<FitResult> {
    if t.len() < 4 || t.len() != temperature.len() {
        return Err(Error::SeriesTooShort { needed: 4, got: t.len().min(temperature.len()) });
    }
    let tb0 = temperature.iter().cloned().fold(0.0, f64::max);
    let g0 = (tb0 / temperature[0].max(1e-300) - 1.0).max(0.0);
    let tau0 = (t.last().unwrap() - t[0]) / 3.0;
    let params = [
        Param::bounded("t_bath", tb0, 0.0, f64::INFINITY),
        Param::bounded("g_s0", g0, 0.0, f64::INFINITY),
        Param::bounded("tau", tau0, 0.0, f64::INFINITY),
    ];
    least_squares(
        |t, q| q[0] / (1.0 + q[1] * (-t / q[2]).exp()),
        t,
        temperature,
        None,
        &params,
        &LsqOptions::default(),
    )
}

/// [`fit_atom_decay`] for a membrane that cannot follow the decay: the model
/// is [`decay_trace_relaxing`], with the atoms loaded at `t = 0` and the
/// membrane at the bath before. Bins before loading constrain `t_bath`.
///
/// Parameters: `t_bath`, `g_s0`, `tau`.
pub fn fit_atom_decay_relaxing(t: &[f64], temperature: &[f64], gamma_m: f64) -> Result<FitResult> {
    if t.len() < 4 || t.len() != temperature.len() {
        return Err(Error::SeriesTooShort { needed: 4, got: t.len().min(temperature.len()) });
    }
    if !(gamma_m > 0.0) {
        return Err(Error::param("gamma_m", "must be > 0"));
    }
    let (ta, ya): (Vec<f64>, Vec<f64>) = t.iter().zip(temperature).filter(|(t, _)| **t > 0.0).map(|(t, y)| (*t, *y)).unzip();
    let init = fit_atom_decay(&ta, &ya)?;
    let params = [
        Param::bounded("t_bath", init.params["t_bath"], 0.0, f64::INFINITY),
        Param::bounded("g_s0", init.params["g_s0"], 0.0, f64::INFINITY),
        Param::bounded("tau", init.params["tau"].max(f64::MIN_POSITIVE), 0.0, f64::INFINITY),
    ];
    least_squares(
        |t, q| decay_trace_relaxing(q[0], q[1], q[2], gamma_m, t),
        t,
        temperature,
        None,
        &params,
        &LsqOptions::default(),
    )
}

/// Displacement density of a damped oscillator driven by white force noise,
/// `a / ((ω0² − ω²)² + γ²ω²)` with ω = 2πf.
pub fn thermal_line(f: f64, omega0: f64, gamma: f64, a: f64) -> f64 {
    let w = TWO_PI * f;
    a / ((omega0 * omega0 - w * w).powi(2) + gamma * gamma * w * w)
}

/// Fits [`thermal_line`] in log density to a noiseless displacement
/// spectrum. Unlike a Lorentzian this keeps its shape when the damping is a
/// sizeable fraction of the frequency.
///
/// Parameters: `omega0`, `gamma` (rad/s), `a`.
pub fn fit_thermal_line(s: &Spectrum) -> Result<FitResult> {
    let (f, y): (Vec<f64>, Vec<f64>) = s
        .freq
        .iter()
        .zip(&s.psd)
        .filter(|(f, y)| **y > 0.0 && **f > 0.0)
        .map(|(f, y)| (*f, *y))
        .unzip();
    if f.len() < 8 {
        return Err(Error::SeriesTooShort { needed: 8, got: f.len() });
    }
    let ipk = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let df = f[1] - f[0];
    let span = f.last().unwrap() - f[0];
    let w0 = TWO_PI * f[ipk];
    let width = half_width(&f, &y, 0.0).unwrap_or(0.1 * span).max(df);
    let gamma0 = TWO_PI * width;
    let a0 = y[ipk] * gamma0 * gamma0 * w0 * w0;
    let params = [
        Param::bounded("omega0", w0, TWO_PI * f[0], TWO_PI * *f.last().unwrap()),
        Param::bounded("gamma", gamma0, 1e-3 * TWO_PI * df, 4.0 * w0),
        Param::bounded("a", a0, 0.0, f64::INFINITY),
    ];
    least_squares(|x, q| thermal_line(x, q[0], q[1], q[2]), &f, &y, None, &params, &LsqOptions::log())
}

/// Angular full width of a Lorentzian fitted in Hz.
pub fn fwhm_to_rate(fwhm_hz: f64) -> f64 {
    2.0 * PI * fwhm_hz
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub fn inloop_init(s: &Spectrum, p: &MembraneParams, d: &DetectionParams, g_s: f64) -> f64 {
        inloop_gain_from_peak(s.interpolate(p.omega_m / TWO_PI), p, d, g_s)
    }
}
