use serde::Serialize;

use super::{
    coupling_rate_gn, hybrid_cooperativity, thermal_occupation, zero_point_motion,
    AtomCouplingParams, DetectionParams, MembraneParams,
};

/// Outcome of the ground-state feedback-cooling criterion
/// `S_xn < 4·x_zp² / (n_th·Γ_m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroundStateReport {
    pub feasible: bool,
    /// Bound divided by S_xn; `f64::INFINITY` for a noiseless detector.
    pub margin: f64,
    /// 4·x_zp² / (n_th·Γ_m), m²/Hz.
    pub bound: f64,
}

pub fn ground_state_feasible(p: &MembraneParams, d: &DetectionParams) -> GroundStateReport {
    let xzp = zero_point_motion(p);
    let n_th = thermal_occupation(p.t_bath, p.omega_m);
    let bound = 4.0 * xzp * xzp / (n_th * p.gamma_m);
    let margin = if d.s_xn > 0.0 { bound / d.s_xn } else { f64::INFINITY };
    GroundStateReport {
        feasible: margin > 1.0,
        margin,
        bound,
    }
}

/// A hardware upgrade expressed as multiplicative changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Improvement {
    pub label: &'static str,
    /// Factor applied to Q_m (Γ_m is divided by it).
    pub q_factor: f64,
    /// Factor applied to the membrane mass.
    pub mass_factor: f64,
    /// New cavity finesse, if changed.
    pub finesse: Option<f64>,
}

impl Improvement {
    /// The upgrade set considered for reaching the strong-coupling,
    /// ground-state regime.
    pub fn standard_set() -> [Improvement; 4] {
        [
            Improvement { label: "Qx10", q_factor: 10.0, mass_factor: 1.0, finesse: None },
            Improvement { label: "m/10", q_factor: 1.0, mass_factor: 0.1, finesse: None },
            Improvement { label: "Qx10,m/10", q_factor: 10.0, mass_factor: 0.1, finesse: None },
            Improvement { label: "F=850", q_factor: 1.0, mass_factor: 1.0, finesse: Some(850.0) },
        ]
    }

    pub fn apply(&self, p: &MembraneParams, a: &AtomCouplingParams) -> (MembraneParams, AtomCouplingParams) {
        let mut p2 = *p;
        p2.gamma_m /= self.q_factor;
        p2.mass *= self.mass_factor;
        let mut a2 = *a;
        if let Some(f) = self.finesse {
            a2.finesse = f;
        }
        (p2, a2)
    }
}

/// Figures of merit before and after an [`Improvement`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub label: String,
    pub c_hybrid_before: f64,
    pub c_hybrid_after: f64,
    pub c_hybrid_ratio: f64,
    pub margin_before: f64,
    pub margin_after: f64,
    pub margin_ratio: f64,
    pub feasible_before: bool,
    pub feasible_after: bool,
    /// Strong-coupling check C_hybrid > n_th after the upgrade.
    pub strong_coupling_after: bool,
}

fn cooperativity(p: &MembraneParams, a: &AtomCouplingParams) -> f64 {
    hybrid_cooperativity(coupling_rate_gn(a, p), a.gamma_a, p.gamma_m)
}

/// Evaluates an upgrade. The cooperativity is the on-resonance value
/// `4g_N²/(Γ_a Γ_m)` at the scenario's ω_a.
pub fn project(p: &MembraneParams, d: &DetectionParams, a: &AtomCouplingParams, imp: &Improvement) -> Projection {
    let (p2, a2) = imp.apply(p, a);
    let c0 = cooperativity(p, a);
    let c1 = cooperativity(&p2, &a2);
    let g0 = ground_state_feasible(p, d);
    let g1 = ground_state_feasible(&p2, d);
    Projection {
        label: imp.label.to_string(),
        c_hybrid_before: c0,
        c_hybrid_after: c1,
        c_hybrid_ratio: c1 / c0,
        margin_before: g0.margin,
        margin_after: g1.margin,
        margin_ratio: g1.margin / g0.margin,
        feasible_before: g0.feasible,
        feasible_after: g1.feasible,
        strong_coupling_after: c1 > thermal_occupation(p2.t_bath, p2.omega_m),
    }
}

