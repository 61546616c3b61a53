use serde::{Deserialize, Serialize};

use crate::consts::rad_to_hz;
use crate::error::{Error, Result};
use crate::model::MembraneParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Symplectic Euler with time-centred damping and the stiffness
    /// pre-warped so the undamped map oscillates at exactly ω_m.
    #[default]
    SemiImplicitEuler,
    /// Predictor–corrector (additive-noise Heun), for convergence checks.
    StochasticHeun,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    Off,
    #[default]
    Velocity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    #[default]
    Off,
    EffectiveDamping,
    TwoOscillator,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Position and velocity drawn from equilibrium at the bath temperature.
    #[default]
    Thermal,
    Rest,
    /// Released from rest at the given displacement (m); ringdown checks.
    Displaced(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Hz.
    pub sample_rate: f64,
    /// s.
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub feedback_mode: FeedbackMode,
    #[serde(default)]
    pub coupling_mode: CouplingMode,
    /// Pole of the derivative band limit, rad/s. `None` means 5·ω_m.
    #[serde(default)]
    pub band_limit: Option<f64>,
    /// Pure delay in the feedback path, s.
    #[serde(default)]
    pub loop_delay: f64,
    /// Temperature of the thermal drive on the atom mode, K (0 = cold damper).
    #[serde(default)]
    pub atom_temperature: f64,
    #[serde(default)]
    pub initial: InitialState,
}

impl SimConfig {
    pub fn new(sample_rate: f64, duration: f64, seed: u64) -> Self {
        Self {
            sample_rate,
            duration,
            seed,
            scheme: Scheme::default(),
            feedback_mode: FeedbackMode::default(),
            coupling_mode: CouplingMode::default(),
            band_limit: None,
            loop_delay: 0.0,
            atom_temperature: 0.0,
            initial: InitialState::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_coupling(mut self, mode: CouplingMode) -> Self {
        self.coupling_mode = mode;
        self
    }

    pub fn with_feedback(mut self, mode: FeedbackMode) -> Self {
        self.feedback_mode = mode;
        self
    }

    pub fn with_band_limit(mut self, pole: f64) -> Self {
        self.band_limit = Some(pole);
        self
    }

    pub fn with_initial(mut self, initial: InitialState) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn band_limit_for(&self, p: &MembraneParams) -> f64 {
        self.band_limit.unwrap_or(5.0 * p.omega_m)
    }

    pub fn validate(&self, p: &MembraneParams) -> Result<()> {
        let f_m = rad_to_hz(p.omega_m);
        if !(self.sample_rate > 20.0 * f_m) {
            return Err(Error::param(
                "sample_rate",
                format!("must exceed 20·f_m = {} Hz, got {}", 20.0 * f_m, self.sample_rate),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::param("duration", "must be > 0"));
        }
        if let Some(b) = self.band_limit {
            if !(b > 0.0) {
                return Err(Error::param("band_limit", "must be > 0"));
            }
        }
        if !(self.loop_delay >= 0.0) {
            return Err(Error::param("loop_delay", "must be >= 0"));
        }
        if !(self.atom_temperature >= 0.0) {
            return Err(Error::param("atom_temperature", "must be >= 0"));
        }
        Ok(())
    }
}
