use serde::{Deserialize, Serialize};

use crate::consts::{hz_to_rad, MASS_RB87};
use crate::error::{Error, Result};

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and >= 0, got {v}")))
    }
}

/// Fundamental mechanical mode of the membrane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembraneParams {
    /// Effective mass, kg.
    pub mass: f64,
    /// Resonance frequency, rad/s.
    pub omega_m: f64,
    /// Energy damping rate (linewidth), rad/s.
    pub gamma_m: f64,
    /// Bath temperature, K.
    pub t_bath: f64,
}

impl MembraneParams {
    pub fn new(mass: f64, omega_m: f64, gamma_m: f64, t_bath: f64) -> Result<Self> {
        let p = Self {
            mass,
            omega_m,
            gamma_m,
            t_bath,
        };
        p.validate()?;
        Ok(p)
    }

    /// The Si₃N₄ membrane of the reference experiment: 76 ng,
    /// 2π×264 kHz, 2π×24.5 mHz linewidth, 500 mK bath.
    pub fn paper() -> Self {
        Self {
            mass: 76e-12,
            omega_m: hz_to_rad(264e3),
            gamma_m: hz_to_rad(24.5e-3),
            t_bath: 0.5,
        }
    }

    /// Scaled-down oscillator used for fast stochastic checks:
    /// 2π×1 kHz, Q = 10³, same mass and bath as [`MembraneParams::paper`].
    pub fn scaled() -> Self {
        Self::paper()
            .with_frequency(hz_to_rad(1e3))
            .with_quality_factor(1e3)
    }

    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("omega_m", self.omega_m)?;
        positive("gamma_m", self.gamma_m)?;
        positive("t_bath", self.t_bath)?;
        if self.quality_factor() <= 1.0 {
            return Err(Error::param(
                "gamma_m",
                format!("quality factor must exceed 1, got {}", self.quality_factor()),
            ));
        }
        Ok(())
    }

    /// Q_m = ω_m / Γ_m.
    #[inline]
    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    /// k_m = m·ω_m², N/m.
    #[inline]
    pub fn spring_constant(&self) -> f64 {
        self.mass * self.omega_m * self.omega_m
    }

    /// Keeps Q fixed while moving the resonance.
    pub fn with_frequency(mut self, omega_m: f64) -> Self {
        let q = self.quality_factor();
        self.omega_m = omega_m;
        self.gamma_m = omega_m / q;
        self
    }

    pub fn with_quality_factor(mut self, q: f64) -> Self {
        self.gamma_m = self.omega_m / q;
        self
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn with_t_bath(mut self, t_bath: f64) -> Self {
        self.t_bath = t_bath;
        self
    }
}

/// Displacement-equivalent detection noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// One-sided noise floor, m²/Hz.
    pub s_xn: f64,
}

impl DetectionParams {
    pub fn new(s_xn: f64) -> Result<Self> {
        let d = Self { s_xn };
        d.validate()?;
        Ok(d)
    }

    /// 7.4×10⁻³³ m²/Hz.
    pub fn paper() -> Self {
        Self { s_xn: 7.4e-33 }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("s_xn", self.s_xn)
    }
}

/// Velocity-feedback loop settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Dimensionless feedback gain g_v (added damping in units of Γ_m).
    pub gain_v: f64,
    /// Effective phase delay of the loop; only π/2 (velocity feedback) is modelled.
    pub phase_eff: f64,
}

impl FeedbackParams {
    pub fn velocity(gain_v: f64) -> Self {
        Self {
            gain_v,
            phase_eff: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("gain_v", self.gain_v)?;
        if (self.phase_eff - std::f64::consts::FRAC_PI_2).abs() > 1e-12 {
            return Err(Error::param(
                "phase_eff",
                "only velocity feedback (phase π/2) is supported",
            ));
        }
        Ok(())
    }

    /// t_cool = (Γ_m·g_v)⁻¹; `None` when the loop is off.
    pub fn cooldown_time(&self, p: &MembraneParams) -> Option<f64> {
        (self.gain_v > 0.0).then(|| 1.0 / (p.gamma_m * self.gain_v))
    }
}

/// Atomic ensemble coupled to the membrane through the optical lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomCouplingParams {
    /// Atom number in the coupling volume.
    pub n_atoms: f64,
    /// Single-atom mass, kg.
    pub mass_atom: f64,
    /// Lattice trap frequency, rad/s.
    pub omega_a: f64,
    /// Laser-cooling rate, rad/s.
    pub gamma_a: f64,
    /// Amplitude reflectivity |r_m| of the membrane.
    pub reflectivity: f64,
    /// Cavity finesse.
    pub finesse: f64,
}

impl AtomCouplingParams {
    /// Representative molasses configuration for the reference membrane:
    /// ⁸⁷Rb, ω_a = 1.25 ω_m, Γ_a = 0.11 ω_m, |r_m| = 0.42, F = 160, and an
    /// effective atom number chosen so that Γ_sym ≈ 23 s⁻¹ (C_hybrid ≈ 150).
    pub fn paper(p: &MembraneParams) -> Self {
        Self {
            n_atoms: 7.0e6,
            mass_atom: MASS_RB87,
            omega_a: 1.25 * p.omega_m,
            gamma_a: 0.11 * p.omega_m,
            reflectivity: 0.42,
            finesse: 160.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("n_atoms", self.n_atoms)?;
        positive("mass_atom", self.mass_atom)?;
        positive("omega_a", self.omega_a)?;
        positive("gamma_a", self.gamma_a)?;
        positive("finesse", self.finesse)?;
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(Error::param(
                "reflectivity",
                format!("must lie in [0, 1], got {}", self.reflectivity),
            ));
        }
        Ok(())
    }

    pub fn with_n_atoms(mut self, n: f64) -> Self {
        self.n_atoms = n;
        self
    }

    pub fn with_omega_a(mut self, omega_a: f64) -> Self {
        self.omega_a = omega_a;
        self
    }
}

/// Exponential loss of atoms from the coupling volume, N(t) = n0·e^{−t/τ}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomDecayModel {
    pub n0: f64,
    /// 1/e lifetime, s.
    pub tau: f64,
}

impl AtomDecayModel {
    pub fn validate(&self) -> Result<()> {
        non_negative("n0", self.n0)?;
        positive("tau", self.tau)
    }

    #[inline]
    pub fn n_at(&self, t: f64) -> f64 {
        self.n0 * (-t / self.tau).exp()
    }
}

/// Feedback and sympathetic gains, both in units of Γ_m.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoolingGains {
    pub g_v: f64,
    /// Γ_sym / Γ_m.
    pub g_s: f64,
}

impl CoolingGains {
    pub fn new(g_v: f64, g_s: f64) -> Self {
        Self { g_v, g_s }
    }

    pub fn feedback(g_v: f64) -> Self {
        Self { g_v, g_s: 0.0 }
    }

    pub fn sympathetic(g_s: f64) -> Self {
        Self { g_v: 0.0, g_s }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("g_v", self.g_v)?;
        non_negative("g_s", self.g_s)
    }

    /// 1 + g_v + g_s: total damping in units of Γ_m.
    #[inline]
    pub fn total(&self) -> f64 {
        1.0 + self.g_v + self.g_s
    }
}
