//! Analysis chains shared by the commands.

use optocool_core::consts::{hz_to_rad, rad_to_hz};
use optocool_core::fit::{
    extract_final_temperature, fit_cooldown, fit_inloop_spectrum, fit_thermal_line, FitResult,
};
use optocool_core::model::{
    min_temp_sympathetic, psd_in_loop, thermal_occupation, variance_to_temperature, CoolingGains, DetectionParams,
    MembraneParams,
};
use optocool_core::sim::{CouplingMode, Simulation, Stage, Trajectory};
use optocool_core::spectral::{welch_psd, zero_span_trace, Spectrum, WelchAccumulator, ZeroSpanOptions, ZeroSpanTrace};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::Scenario;

/// Steady-state simulate → spectrum → fit → temperature result.
#[derive(Clone, Debug, Serialize)]
pub struct ChainResult {
    /// Fitted feedback gain (in-loop fit), when feedback is on.
    pub g_v_fit: Option<f64>,
    /// Sympathetic gain from the fitted damping of the displacement spectrum,
    /// when feedback is off.
    pub g_s_fit: Option<f64>,
    /// Temperature from the fitted parameters, K.
    pub t_final: f64,
    pub n_bar: f64,
    /// m·ω_m²·⟨x²⟩/k_B of the simulated displacement, K.
    pub t_direct: f64,
    pub sample_rate: f64,
    pub rbw: f64,
    pub n_averages: usize,
    #[serde(skip)]
    pub fit: FitResult,
    #[serde(skip)]
    pub spectrum: Spectrum,
}

/// Sampling settings adapted to the final stage: the sample rate is raised
/// so the fit band sits below a fifth of it and the loop lag stays
/// negligible, and the derivative pole is kept two decades above the loop
/// bandwidth.
pub struct ChainSettings {
    pub sample_rate: f64,
    pub band_limit: f64,
    pub rbw: f64,
    pub averages: usize,
    pub settle: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Sample rate at which the loop's half-sample lag φ leaves a
/// detection-noise residue S_xn·φ² in the in-loop signal below 2 % of the
/// squashed density at ω_m, rounded up to 10 kHz and capped at 2 MHz.
/// Assumes the derivative pole is far above ω_m.
pub fn loop_sample_rate(p: &MembraneParams, d: &DetectionParams, gains: CoolingGains, base: f64) -> f64 {
    if gains.g_v <= 0.0 || d.s_xn <= 0.0 {
        return base;
    }
    let s_y = psd_in_loop(p.omega_m, p, d, gains);
    let needed = 0.5 * p.omega_m * (d.s_xn / (0.02 * s_y)).sqrt();
    base.max(((needed / 1e4).ceil() * 1e4).min(2e6))
}

pub fn chain_settings(scn: &Scenario) -> Result<ChainSettings, CliError> {
    let p = &scn.membrane;
    let lw = scn.final_linewidth_hz()?;
    let f_m = rad_to_hz(p.omega_m);
    let span = 10.0 * lw;
    let (g_v, g_s) = scn.final_gains()?;
    let sample_rate = scn.sim.sample_rate.max((5.0 * (f_m + span) / 1e3).ceil() * 1e3);
    let sample_rate = loop_sample_rate(p, &scn.detection, CoolingGains::new(g_v, g_s), sample_rate);
    let gamma_eff = hz_to_rad(lw);
    let band_limit = scn.sim.band_limit.unwrap_or(50.0 * p.omega_m).max(100.0 * gamma_eff);
    let rbw = scn.analysis.rbw.unwrap_or(lw / 10.0);
    let averages = scn.analysis.averages.unwrap_or(100).max(2);
    let mut settle = scn.analysis.settle.unwrap_or(20.0 / gamma_eff);
    if let (CouplingMode::TwoOscillator, Some(a)) = (scn.sim.coupling_mode, scn.atoms) {
        settle = settle.max(20.0 / a.gamma_a);
    }
    let f_lo = (f_m - span).max(0.1 * f_m);
    let f_hi = (f_m + span).min(0.4 * sample_rate);
    Ok(ChainSettings { sample_rate, band_limit, rbw, averages, settle, f_lo, f_hi })
}

/// Streams a steady run at the final-stage gains into a Welch estimator and
/// fits it: the in-loop model when feedback is on, the damped-oscillator
/// line shape of the displacement otherwise.
pub fn steady_chain(scn: &Scenario) -> Result<ChainResult, CliError> {
    let p = scn.membrane;
    let st = chain_settings(scn)?;
    let (g_v, _) = scn.final_gains()?;
    let last = *scn.stages()?.last().expect("stage");
    let nseg = (1.5 * st.sample_rate / st.rbw).round() as usize;
    let duration = st.settle + (st.averages + 1) as f64 * nseg as f64 / 2.0 / st.sample_rate;
    let mut cfg = scn.sim.clone();
    cfg.sample_rate = st.sample_rate;
    cfg.duration = duration;
    cfg.band_limit = Some(st.band_limit);
    let mut sim = Simulation::new(p, cfg)
        .with_detection(scn.detection)
        .with_stages(vec![Stage::new(0.0, last.gain_v, last.gamma_sym)]);
    if let (CouplingMode::TwoOscillator, Some(a)) = (scn.sim.coupling_mode, scn.atoms) {
        sim = sim.with_atoms(a);
    }
    let in_loop = g_v > 0.0;
    let mut acc = WelchAccumulator::new(st.sample_rate, nseg, 0.5)?;
    let skip = (st.settle * st.sample_rate) as usize;
    let (mut i, mut s2, mut n) = (0usize, 0.0, 0usize);
    sim.run_streaming(|s| {
        if i >= skip {
            acc.push(if in_loop { s.y } else { s.x });
            s2 += s.x * s.x;
            n += 1;
        }
        i += 1;
    })?;
    let full = acc.finish()?;
    let band = full.slice(st.f_lo, st.f_hi);
    let t_direct = variance_to_temperature(&p, s2 / n as f64);
    let (g_s, fit, g_v_fit, g_s_fit, t_final);
    if in_loop {
        g_s = scn.final_gains()?.1;
        fit = fit_inloop_spectrum(&band, &p, &scn.detection, g_s)?;
        g_v_fit = fit.get("g_v").ok();
        g_s_fit = None;
        t_final = extract_final_temperature(&fit, &p, &scn.detection, g_s)?;
    } else {
        fit = fit_thermal_line(&band)?;
        let gs = (fit.get("gamma")? / p.gamma_m - 1.0).max(0.0);
        g_v_fit = None;
        g_s_fit = Some(gs);
        t_final = min_temp_sympathetic(p.t_bath, gs * p.gamma_m, p.gamma_m);
    }
    if !fit.converged {
        return Err(CliError::numerical(format!("spectral fit did not converge: {:?}", fit.flags)));
    }
    Ok(ChainResult {
        g_v_fit,
        g_s_fit,
        t_final,
        n_bar: thermal_occupation(t_final, p.omega_m),
        t_direct,
        sample_rate: st.sample_rate,
        rbw: full.resolution_bw,
        n_averages: full.n_averages,
        fit,
        spectrum: band,
    })
}

/// Zero-span settings: bandwidth 40 final linewidths (at least 50 Hz, at
/// most f_m), bins no shorter than the filter allows.
pub fn zero_span_settings(scn: &Scenario) -> Result<(f64, f64), CliError> {
    let f_m = rad_to_hz(scn.membrane.omega_m);
    let lw = scn.final_linewidth_hz()?;
    let bw = scn.analysis.zero_span_bandwidth.unwrap_or((40.0 * lw).clamp(50.0, f_m));
    let bin = scn.analysis.bin.unwrap_or((scn.sim.duration / 200.0).max(2.0 / bw));
    Ok((bw, bin))
}

/// Ensemble of independent runs (seed ⊕ run index). Returns run 0's
/// trajectory and the run-averaged zero-span trace of x.
pub fn zero_span_ensemble(scn: &Scenario) -> Result<(Trajectory, ZeroSpanTrace), CliError> {
    let runs = scn.analysis.runs.unwrap_or(1).max(1);
    let (bw, bin) = zero_span_settings(scn)?;
    let f_m = rad_to_hz(scn.membrane.omega_m);
    let sim = scn.simulation()?;
    let out: Vec<(Option<Trajectory>, ZeroSpanTrace)> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut s = sim.clone();
            s.config.seed = scn.seed ^ k as u64;
            let tr = s.run()?;
            let opts = ZeroSpanOptions { t0: tr.t0, subtract_noise: None };
            let zs = zero_span_trace(&tr.x, tr.sample_rate(), f_m, bw, bin, &scn.membrane, opts)?;
            Ok::<_, CliError>(((k == 0).then_some(tr), zs))
        })
        .collect::<Result<_, _>>()?;
    let mut first = None;
    let mut traces = Vec::with_capacity(runs);
    for (tr, zs) in out {
        if tr.is_some() {
            first = tr;
        }
        traces.push(zs);
    }
    Ok((first.expect("run 0"), ZeroSpanTrace::average(&traces)?))
}

/// Mean of the trace bins after `t_from`; falls back to the last quarter.
pub fn steady_mean(zs: &ZeroSpanTrace, t_from: f64) -> f64 {
    let mut v: Vec<f64> = zs.t.iter().zip(&zs.temperature).filter(|(t, _)| **t >= t_from).map(|(_, v)| *v).collect();
    if v.is_empty() {
        v = zs.temperature[zs.len() * 3 / 4..].to_vec();
    }
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Fits the cooldown that follows a single gain step at `t_step`, using the
/// trace shifted so the step is at t = 0.
pub fn fit_step(zs: &ZeroSpanTrace, t_step: f64, gamma_m: f64) -> Result<FitResult, CliError> {
    let mut shifted = zs.clone();
    for t in shifted.t.iter_mut() {
        *t -= t_step;
    }
    Ok(fit_cooldown(&shifted, gamma_m)?)
}

/// Welch spectrum of `series[from..]` with the requested resolution, coarsened
/// if needed so at least eight segments fit.
pub fn tail_spectrum(series: &[f64], fs: f64, from: usize, rbw: f64) -> Result<Spectrum, CliError> {
    let data = &series[from.min(series.len())..];
    let wanted = (1.5 * fs / rbw).round() as usize;
    let nseg = wanted.min(data.len() / 4).max(16);
    Ok(welch_psd(data, fs, nseg, 0.5)?)
}
