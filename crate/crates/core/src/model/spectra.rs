use num_complex::Complex64;

use super::{variance_to_temperature, CoolingGains, DetectionParams, MembraneParams};
use crate::consts::{K_B, TWO_PI};
use crate::quad;

/// Velocity-damped mechanical susceptibility `[m(ω_m² − ω² − iωΓ)]⁻¹`, m/N.
///
/// `gamma` replaces Γ_m so the effective susceptibilities of the cooled mode
/// are obtained by passing `Γ_m·(1 + g_s)` or `Γ_m·(1 + g_v + g_s)`.
pub fn susceptibility_mech(omega: f64, p: &MembraneParams, gamma: f64) -> Complex64 {
    let inv = Complex64::new(
        p.mass * (p.omega_m * p.omega_m - omega * omega),
        -p.mass * omega * gamma,
    );
    inv.inv()
}

/// χ_fb⁻¹ = −i·m·ω·Γ_m·g_v.
pub fn feedback_inverse_susceptibility(omega: f64, p: &MembraneParams, g_v: f64) -> Complex64 {
    Complex64::new(0.0, -p.mass * omega * p.gamma_m * g_v)
}

/// One-sided white thermal force density `4·k_B·T_bath·m·Γ_m`, N²/Hz.
pub fn thermal_force_psd(p: &MembraneParams) -> f64 {
    4.0 * K_B * p.t_bath * p.mass * p.gamma_m
}

/// Out-of-loop (true displacement) density
/// `|χ_eff,sf|²·[S_F + |χ_fb|⁻²·S_xn]`, m²/Hz.
pub fn psd_out_of_loop(omega: f64, p: &MembraneParams, d: &DetectionParams, gains: CoolingGains) -> f64 {
    let chi_sf = susceptibility_mech(omega, p, p.gamma_m * gains.total());
    let fb = feedback_inverse_susceptibility(omega, p, gains.g_v).norm_sqr();
    chi_sf.norm_sqr() * (thermal_force_psd(p) + fb * d.s_xn)
}

/// In-loop (measured) density `|χ_eff,sf|²·[S_F + |χ_eff,s|⁻²·S_xn]`, m²/Hz.
pub fn psd_in_loop(omega: f64, p: &MembraneParams, d: &DetectionParams, gains: CoolingGains) -> f64 {
    let chi_sf = susceptibility_mech(omega, p, p.gamma_m * gains.total());
    let chi_s = susceptibility_mech(omega, p, p.gamma_m * (1.0 + gains.g_s));
    chi_sf.norm_sqr() * (thermal_force_psd(p) + d.s_xn / chi_s.norm_sqr())
}

/// Mode temperature obtained by numerically integrating the out-of-loop
/// spectrum over `f ∈ [0, ∞)`.
///
/// Independent of the closed form; the two agree to quadrature accuracy.
pub fn integrated_temperature(p: &MembraneParams, d: &DetectionParams, gains: CoolingGains) -> f64 {
    let width = p.gamma_m * gains.total();
    let var = quad::integrate_resonance(|w| psd_out_of_loop(w, p, d, gains), p.omega_m, width, 1e-10);
    variance_to_temperature(p, var / TWO_PI)
}
