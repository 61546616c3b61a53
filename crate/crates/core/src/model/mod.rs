//! Closed-form model of the cooled membrane.
//!
//! Everything here is a pure function of its arguments. Frequencies and rates
//! are angular; spectral densities are one-sided. The mode temperature of a
//! displacement variance is `m·ω_m²·⟨x²⟩/k_B` throughout.

mod feasibility;
mod params;
mod spectra;

pub use feasibility::{ground_state_feasible, project, GroundStateReport, Improvement, Projection};
pub use params::{
    AtomCouplingParams, AtomDecayModel, CoolingGains, DetectionParams, FeedbackParams,
    MembraneParams,
};
pub use spectra::{
    feedback_inverse_susceptibility, integrated_temperature, psd_in_loop, psd_out_of_loop,
    susceptibility_mech, thermal_force_psd,
};

use crate::consts::{HBAR, K_B};
use crate::error::{Error, Result};

/// x_zp = √(ħ / 2mω_m).
pub fn zero_point_motion(p: &MembraneParams) -> f64 {
    (HBAR / (2.0 * p.mass * p.omega_m)).sqrt()
}

/// n_th = k_B·T / ħω (high-temperature limit).
pub fn thermal_occupation(t: f64, omega: f64) -> f64 {
    K_B * t / (HBAR * omega)
}

/// Inverse of [`thermal_occupation`].
pub fn occupation_to_temperature(n: f64, omega: f64) -> f64 {
    n * HBAR * omega / K_B
}

/// Mode temperature of a displacement variance, `m·ω_m²·⟨x²⟩/k_B`.
pub fn variance_to_temperature(p: &MembraneParams, var_x: f64) -> f64 {
    p.spring_constant() * var_x / K_B
}

pub fn temperature_to_variance(p: &MembraneParams, t: f64) -> f64 {
    K_B * t / p.spring_constant()
}

/// Mode temperature after switching on a damping gain `g` at `t = 0`,
/// starting from the bath temperature.
pub fn cooldown_trace(p: &MembraneParams, g: f64, t: f64) -> f64 {
    let rate = p.gamma_m * (1.0 + g);
    p.t_bath / (1.0 + g) * (1.0 + g * (-rate * t).exp())
}

/// `m·ω_m³ / (4·k_B·Q_m)`, the prefactor of the noise-heating term, K·Hz/m².
#[inline]
pub fn noise_heating_coefficient(p: &MembraneParams) -> f64 {
    p.spring_constant() * p.omega_m / (4.0 * K_B * p.quality_factor())
}

/// Steady-state temperature under velocity feedback alone.
pub fn final_temperature_feedback(p: &MembraneParams, d: &DetectionParams, g_v: f64) -> f64 {
    p.t_bath / (1.0 + g_v) + noise_heating_coefficient(p) * g_v * g_v / (1.0 + g_v) * d.s_xn
}

/// Steady-state temperature under combined feedback and sympathetic cooling.
///
/// Reduces to [`final_temperature_feedback`] at `g_s = 0` and to
/// [`min_temp_sympathetic`] at `g_v = 0` (bit-for-bit).
pub fn final_temperature_combined(p: &MembraneParams, d: &DetectionParams, gains: CoolingGains) -> f64 {
    let total = 1.0 + gains.g_v + gains.g_s;
    p.t_bath / total + noise_heating_coefficient(p) * gains.g_v * gains.g_v / total * d.s_xn
}

/// Gain minimising the steady-state temperature, together with that temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalGain {
    pub g_opt: f64,
    pub t_min: f64,
}

/// Analytic minimiser of [`final_temperature_feedback`].
pub fn optimal_feedback_gain(p: &MembraneParams, d: &DetectionParams) -> Result<OptimalGain> {
    optimal_feedback_gain_combined(p, d, 0.0)
}

/// Minimiser of [`final_temperature_combined`] over `g_v` at fixed `g_s`.
///
/// Stationary point of `T_b/(1+g+g_s) + C·S·g²/(1+g+g_s)`:
/// `g_opt = √((1+g_s)² + T_b/(C·S)) − (1+g_s)`.
pub fn optimal_feedback_gain_combined(p: &MembraneParams, d: &DetectionParams, g_s: f64) -> Result<OptimalGain> {
    if d.s_xn <= 0.0 {
        return Err(Error::UnboundedGain);
    }
    let a = 1.0 + g_s;
    let ratio = p.t_bath / (noise_heating_coefficient(p) * d.s_xn);
    // a² + r − a computed without cancellation for r ≪ a².
    let g_opt = ratio / ((a * a + ratio).sqrt() + a);
    let t_min = final_temperature_combined(p, d, CoolingGains::new(g_opt, g_s));
    Ok(OptimalGain { g_opt, t_min })
}

/// Detection floor for which feedback alone is optimal at `g_opt`; the
/// inverse of [`optimal_feedback_gain`].
pub fn detection_for_optimal_gain(p: &MembraneParams, g_opt: f64) -> Result<DetectionParams> {
    if !(g_opt > 0.0 && g_opt.is_finite()) {
        return Err(Error::param("g_opt", format!("must be positive, got {g_opt}")));
    }
    let s_xn = p.t_bath / (noise_heating_coefficient(p) * g_opt * (g_opt + 2.0));
    Ok(DetectionParams { s_xn })
}

/// Light-mediated atom–membrane coupling rate
/// `g_N = |r_m|²·ω_a·√(N·m_a·ω_a / (m·ω_m))·2F/π`, rad/s.
pub fn coupling_rate_gn(a: &AtomCouplingParams, p: &MembraneParams) -> f64 {
    let r2 = a.reflectivity * a.reflectivity;
    let mass_ratio = a.n_atoms * a.mass_atom * a.omega_a / (p.mass * p.omega_m);
    r2 * a.omega_a * mass_ratio.sqrt() * 2.0 * a.finesse / std::f64::consts::PI
}

/// Sympathetic cooling rate, a Lorentzian in the detuning `ω_a − ω_m`.
pub fn sympathetic_rate(g_n: f64, gamma_a: f64, omega_a: f64, omega_m: f64) -> f64 {
    let det = omega_a - omega_m;
    g_n * g_n * gamma_a / (det * det + 0.25 * gamma_a * gamma_a)
}

/// Γ_sym for a full parameter set; errors when `Γ_a = 0`.
pub fn sympathetic_rate_for(a: &AtomCouplingParams, p: &MembraneParams) -> Result<f64> {
    if !(a.gamma_a > 0.0) {
        return Err(Error::param("gamma_a", "laser-cooling rate must be > 0"));
    }
    Ok(sympathetic_rate(coupling_rate_gn(a, p), a.gamma_a, a.omega_a, p.omega_m))
}

/// C_hybrid = 4·g_N² / (Γ_a·Γ_m).
pub fn hybrid_cooperativity(g_n: f64, gamma_a: f64, gamma_m: f64) -> f64 {
    4.0 * g_n * g_n / (gamma_a * gamma_m)
}

/// Minimum temperature reached by sympathetic cooling alone.
pub fn min_temp_sympathetic(t_bath: f64, gamma_sym: f64, gamma_m: f64) -> f64 {
    t_bath / (1.0 + gamma_sym / gamma_m)
}

/// Inverse of [`min_temp_sympathetic`]: the Γ_sym implied by a measured minimum.
pub fn gamma_sym_from_min_temp(t_bath: f64, t_min: f64, gamma_m: f64) -> f64 {
    gamma_m * (t_bath / t_min - 1.0)
}

/// Sympathetic-cooling minimum temperature while atoms leave the lattice.
///
/// Γ_sym is linear in N, so with N(t) = n0·e^{−t/τ} the instantaneous gain is
/// `g_s(t) = g_s[n0]·e^{−t/τ}`.
pub fn atom_decay_temperature_trace(
    p: &MembraneParams,
    a: &AtomCouplingParams,
    decay: &AtomDecayModel,
    t: f64,
) -> Result<f64> {
    let atoms = a.with_n_atoms(decay.n_at(t));
    let gamma_sym = sympathetic_rate_for(&atoms, p)?;
    Ok(min_temp_sympathetic(p.t_bath, gamma_sym, p.gamma_m))
}

/// [`atom_decay_temperature_trace`] parameterised directly by the initial
/// sympathetic gain `g_s0 = Γ_sym[n0]/Γ_m`.
pub fn decay_trace_from_gain(t_bath: f64, g_s0: f64, tau: f64, t: f64) -> f64 {
    t_bath / (1.0 + g_s0 * (-t / tau).exp())
}

/// Ensemble-mean mode temperature when atoms loaded at `t = 0` decay while
/// the membrane relaxes at `Γ_m(1 + g_s(t))`: the solution of
/// `dT/dt = Γ_m·T_b − Γ_m·(1 + g_s0·e^{−t/τ})·T` with `T(0) = T_b`.
///
/// Tends to [`decay_trace_from_gain`] once `Γ_m·τ ≫ 1`.
pub fn decay_trace_relaxing(t_bath: f64, g_s0: f64, tau: f64, gamma_m: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return t_bath;
    }
    // ∫₀ˢ Γ_m(1 + g_s(u)) du
    let damping = |s: f64| gamma_m * (s - g_s0 * tau * (-s / tau).exp_m1());
    let at = damping(t);
    let kernel = |s: f64| (damping(s) - at).exp();
    // The kernel decays backwards from t at least as fast as the current
    // relaxation rate; integrate over windows that double in length.
    let mut width = 1.0 / (gamma_m * (1.0 + g_s0 * (-t / tau).exp()));
    let (mut hi, mut memory) = (t, 0.0);
    while hi > 0.0 {
        let lo = (hi - width).max(0.0);
        memory += crate::quad::integrate(kernel, lo, hi, 1e-10);
        if at - damping(lo) > 40.0 {
            break;
        }
        hi = lo;
        width *= 2.0;
    }
    t_bath * ((-at).exp() + gamma_m * memory)
}

#[cfg(test)]
mod tests;
