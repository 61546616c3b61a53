//! Stochastic time-domain integration of the membrane equation of motion.
//!
//! The membrane obeys
//!
//! ```text
//! ẍ = −ω_m²x − (Γ_m + Γ_sym)ẋ − Γ_m·g_v·D[y] + F_th/m,   y = x + x_n
//! ```
//!
//! where `D` is a first-difference derivative followed by a single-pole
//! band limit and `x_n` is white detection noise. In two-oscillator mode the
//! sympathetic damping is not imposed but emerges from a bilinear coupling to
//! an explicit, laser-cooled atom mode.
//!
//! Every noise source draws from its own ChaCha stream, so switching a
//! source off (or adding the atom mode) leaves the other sequences untouched.

mod config;
mod engine;
mod trajectory;

pub use config::{CouplingMode, FeedbackMode, InitialState, Scheme, SimConfig};
pub use engine::{Sample, Stepper};
pub use trajectory::{Stage, Trajectory};

use crate::error::{Error, Result};
use crate::model::{coupling_rate_gn, AtomCouplingParams, DetectionParams, FeedbackParams, MembraneParams};

/// Everything a run needs; the public entry points below are thin wrappers.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub membrane: MembraneParams,
    pub detection: DetectionParams,
    /// Piecewise-constant gains, sorted by start time. The first stage's start
    /// is the trajectory's start time.
    pub stages: Vec<Stage>,
    pub atoms: Option<AtomCouplingParams>,
    pub config: SimConfig,
}

impl Simulation {
    pub fn new(membrane: MembraneParams, config: SimConfig) -> Self {
        Self {
            membrane,
            detection: DetectionParams { s_xn: 0.0 },
            stages: vec![Stage::new(0.0, 0.0, 0.0)],
            atoms: None,
            config,
        }
    }

    pub fn with_detection(mut self, d: DetectionParams) -> Self {
        self.detection = d;
        self
    }

    /// Constant gains for the whole run.
    pub fn with_gains(mut self, gain_v: f64, gamma_sym: f64) -> Self {
        let start = self.stages.first().map_or(0.0, |s| s.start);
        self.stages = vec![Stage::new(start, gain_v, gamma_sym)];
        self
    }

    pub fn with_stages(mut self, stages: Vec<Stage>) -> Self {
        self.stages = stages;
        self
    }

    pub fn with_atoms(mut self, a: AtomCouplingParams) -> Self {
        self.atoms = Some(a);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.membrane.validate()?;
        self.detection.validate()?;
        self.config.validate(&self.membrane)?;
        if self.stages.is_empty() {
            return Err(Error::InvalidInput("schedule has no stages".into()));
        }
        for w in self.stages.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(Error::InvalidInput("schedule stages must have increasing start times".into()));
            }
        }
        for s in &self.stages {
            if !(s.gain_v >= 0.0 && s.gamma_sym >= 0.0) {
                return Err(Error::InvalidInput(format!("negative gain in stage starting at {} s", s.start)));
            }
            if s.gamma_sym > 0.0 && self.config.coupling_mode != CouplingMode::EffectiveDamping {
                return Err(Error::InvalidInput(
                    "a sympathetic damping rate requires coupling_mode = effective-damping".into(),
                ));
            }
        }
        match (self.config.coupling_mode, &self.atoms) {
            (CouplingMode::TwoOscillator, None) => {
                return Err(Error::InvalidInput("two-oscillator coupling requires atom parameters".into()))
            }
            (_, Some(a)) => a.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Start time of the run (first stage start).
    pub fn t0(&self) -> f64 {
        self.stages[0].start
    }

    pub fn n_steps(&self) -> usize {
        (self.config.duration * self.config.sample_rate).round() as usize
    }

    pub fn stepper(&self) -> Result<Stepper> {
        self.validate()?;
        Ok(Stepper::new(self))
    }

    /// Integrates and records every sample.
    pub fn run(&self) -> Result<Trajectory> {
        let mut stepper = self.stepper()?;
        let n = self.n_steps();
        let two_osc = self.config.coupling_mode == CouplingMode::TwoOscillator;
        let mut traj = Trajectory::with_capacity(1.0 / self.config.sample_rate, self.t0(), n, two_osc);
        traj.stages = self.stages.clone();
        for _ in 0..n {
            let s = stepper.step()?;
            traj.push(&s);
        }
        Ok(traj)
    }

    /// Integrates without recording, handing each sample to `observe`.
    pub fn run_streaming<F: FnMut(&Sample)>(&self, mut observe: F) -> Result<()> {
        let mut stepper = self.stepper()?;
        for _ in 0..self.n_steps() {
            observe(&stepper.step()?);
        }
        Ok(())
    }

    /// Bilinear coupling rate used in two-oscillator mode.
    pub fn coupling_rate(&self) -> f64 {
        match (self.config.coupling_mode, &self.atoms) {
            (CouplingMode::TwoOscillator, Some(a)) => coupling_rate_gn(a, &self.membrane),
            _ => 0.0,
        }
    }
}

/// Membrane under velocity feedback and an effective sympathetic damping.
pub fn simulate_membrane(
    p: &MembraneParams,
    d: &DetectionParams,
    fb: &FeedbackParams,
    gamma_sym: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    fb.validate()?;
    if cfg.coupling_mode == CouplingMode::TwoOscillator {
        return Err(Error::InvalidInput("use simulate_coupled for two-oscillator runs".into()));
    }
    Simulation::new(*p, cfg.clone())
        .with_detection(*d)
        .with_gains(fb.gain_v, gamma_sym)
        .run()
}

/// Membrane coupled to an explicit atom mode at rate g_N (no detection noise,
/// no feedback). The returned trajectory carries both modes.
pub fn simulate_coupled(p: &MembraneParams, a: &AtomCouplingParams, cfg: &SimConfig) -> Result<Trajectory> {
    if cfg.coupling_mode != CouplingMode::TwoOscillator {
        return Err(Error::InvalidInput("simulate_coupled requires coupling_mode = two-oscillator".into()));
    }
    Simulation::new(*p, cfg.clone()).with_atoms(*a).run()
}

/// Staged run: feedback gain and sympathetic rate switch at the given stage
/// boundaries. The trajectory starts at the first stage's start time (which
/// may be negative) and lasts `cfg.duration`.
pub fn cooldown_experiment(
    p: &MembraneParams,
    d: &DetectionParams,
    stages: &[Stage],
    cfg: &SimConfig,
) -> Result<Trajectory> {
    Simulation::new(*p, cfg.clone())
        .with_detection(*d)
        .with_stages(stages.to_vec())
        .run()
}
