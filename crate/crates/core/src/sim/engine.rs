use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{CouplingMode, FeedbackMode, InitialState, Scheme};
use super::trajectory::Stage;
use super::Simulation;
use crate::consts::K_B;
use crate::error::{Error, Result};
use crate::model::coupling_rate_gn;

const STREAM_THERMAL: u64 = 0;
const STREAM_MEASUREMENT: u64 = 1;
const STREAM_ATOM: u64 = 2;
const STREAM_INITIAL: u64 = 3;

/// One recorded instant of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    /// Measured displacement including detection noise.
    pub y: f64,
    pub x_a: f64,
    pub v_a: f64,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug)]
struct Atom {
    omega2: f64,
    gamma: f64,
    /// Acceleration on the membrane per unit atom displacement, and vice versa.
    k_ma: f64,
    k_am: f64,
    force_sd: f64,
    rng: ChaCha8Rng,
}

/// Incremental integrator. Holds the state at the current sample time; each
/// call to [`Stepper::step`] reports that sample and advances by one step.
#[derive(Clone, Debug)]
pub struct Stepper {
    scheme: Scheme,
    dt: f64,
    t0: f64,
    n: usize,
    omega2: f64,
    gamma_m: f64,
    mass: f64,
    feedback_on: bool,
    stages: Vec<Stage>,
    stage: usize,
    /// Standard deviation of the per-step velocity kick from the bath.
    kick_sd: f64,
    noise_sd: f64,
    alpha: f64,
    delay: VecDeque<f64>,
    delay_steps: usize,
    x: f64,
    v: f64,
    x_a: f64,
    v_a: f64,
    y_prev: f64,
    deriv: f64,
    atom: Option<Atom>,
    rng_th: ChaCha8Rng,
    rng_meas: ChaCha8Rng,
}

impl Stepper {
    pub(super) fn new(sim: &Simulation) -> Self {
        let p = &sim.membrane;
        let cfg = &sim.config;
        let fs = cfg.sample_rate;
        let dt = 1.0 / fs;
        let warp = |w: f64| match cfg.scheme {
            Scheme::SemiImplicitEuler => {
                let s = 2.0 * fs * (0.5 * w * dt).sin();
                s * s
            }
            Scheme::StochasticHeun => w * w,
        };

        // Two-sided force density S_F/2 integrated over one step.
        let s_f = 4.0 * K_B * p.t_bath * p.mass * p.gamma_m;
        let kick_sd = (0.5 * s_f * dt).sqrt() / p.mass;
        let noise_sd = (0.5 * sim.detection.s_xn * fs).sqrt();
        let alpha = 1.0 - (-cfg.band_limit_for(p) * dt).exp();
        let delay_steps = (cfg.loop_delay * fs).round() as usize;

        let atom = match (cfg.coupling_mode, &sim.atoms) {
            (CouplingMode::TwoOscillator, Some(a)) => {
                let big_m = a.n_atoms * a.mass_atom;
                let kappa = 2.0 * coupling_rate_gn(a, p) * (p.omega_m * a.omega_a).sqrt();
                let s_fa = 4.0 * K_B * cfg.atom_temperature * big_m * a.gamma_a;
                // An empty ensemble leaves a decoupled, undriven mode.
                let empty = !(big_m > 0.0);
                Some(Atom {
                    omega2: warp(a.omega_a),
                    gamma: a.gamma_a,
                    k_ma: if empty { 0.0 } else { kappa * (big_m / p.mass).sqrt() },
                    k_am: if empty { 0.0 } else { kappa * (p.mass / big_m).sqrt() },
                    force_sd: if empty { 0.0 } else { (0.5 * s_fa * dt).sqrt() / big_m },
                    rng: rng(cfg.seed, STREAM_ATOM),
                })
            }
            _ => None,
        };

        let mut init = rng(cfg.seed, STREAM_INITIAL);
        let (mut x, mut v, mut x_a, mut v_a) = (0.0, 0.0, 0.0, 0.0);
        if let InitialState::Displaced(x0) = cfg.initial {
            x = x0;
        }
        if cfg.initial == InitialState::Thermal {
            let n1: f64 = StandardNormal.sample(&mut init);
            let n2: f64 = StandardNormal.sample(&mut init);
            let sv = (K_B * p.t_bath / p.mass).sqrt();
            x = n1 * sv / p.omega_m;
            v = n2 * sv;
            if let (Some(a), true) = (&sim.atoms, atom.as_ref().is_some_and(|at| at.force_sd > 0.0)) {
                let n3: f64 = StandardNormal.sample(&mut init);
                let n4: f64 = StandardNormal.sample(&mut init);
                let sva = (K_B * cfg.atom_temperature / (a.n_atoms * a.mass_atom)).sqrt();
                x_a = n3 * sva / a.omega_a;
                v_a = n4 * sva;
            }
        }

        Self {
            scheme: cfg.scheme,
            dt,
            t0: sim.t0(),
            n: 0,
            omega2: warp(p.omega_m),
            gamma_m: p.gamma_m,
            mass: p.mass,
            feedback_on: cfg.feedback_mode == FeedbackMode::Velocity,
            stages: sim.stages.clone(),
            stage: 0,
            kick_sd,
            noise_sd,
            alpha,
            delay: VecDeque::from(vec![v; delay_steps]),
            delay_steps,
            x,
            v,
            x_a,
            v_a,
            y_prev: f64::NAN,
            deriv: v,
            atom,
            rng_th: rng(cfg.seed, STREAM_THERMAL),
            rng_meas: rng(cfg.seed, STREAM_MEASUREMENT),
        }
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.n as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Mass of the membrane the stepper was built for.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn current_stage(&self) -> &Stage {
        &self.stages[self.stage]
    }

    pub fn step(&mut self) -> Result<Sample> {
        let t = self.time();
        while self.stage + 1 < self.stages.len() && t >= self.stages[self.stage + 1].start {
            self.stage += 1;
        }
        let Stage { gain_v, gamma_sym, .. } = self.stages[self.stage];

        let y = if self.noise_sd > 0.0 {
            let e: f64 = StandardNormal.sample(&mut self.rng_meas);
            self.x + self.noise_sd * e
        } else {
            self.x
        };
        if self.y_prev.is_finite() {
            let raw = (y - self.y_prev) / self.dt;
            self.deriv += self.alpha * (raw - self.deriv);
        }
        self.y_prev = y;
        let d = if self.delay_steps > 0 {
            self.delay.push_back(self.deriv);
            self.delay.pop_front().unwrap_or(0.0)
        } else {
            self.deriv
        };

        let sample = Sample { t, x: self.x, v: self.v, y, x_a: self.x_a, v_a: self.v_a };

        let fb_acc = if self.feedback_on { -self.gamma_m * gain_v * d } else { 0.0 };
        let gamma = self.gamma_m + gamma_sym;
        let xi: f64 = StandardNormal.sample(&mut self.rng_th);
        let kick = self.kick_sd * xi;
        let kick_a = match self.atom.as_mut() {
            Some(a) if a.force_sd > 0.0 => {
                let e: f64 = StandardNormal.sample(&mut a.rng);
                a.force_sd * e
            }
            _ => 0.0,
        };
        let dt = self.dt;

        match self.scheme {
            Scheme::SemiImplicitEuler => {
                // Damping is centred between the half-step velocities so that
                // it acts at the same instant as the position-dependent forces.
                let mut acc = -self.omega2 * self.x + fb_acc;
                if let Some(a) = &self.atom {
                    acc -= a.k_ma * self.x_a;
                    let acc_a = -a.omega2 * self.x_a - a.k_am * self.x;
                    let h = 0.5 * a.gamma * dt;
                    self.v_a = (self.v_a * (1.0 - h) + acc_a * dt + kick_a) / (1.0 + h);
                    self.x_a += self.v_a * dt;
                }
                let h = 0.5 * gamma * dt;
                self.v = (self.v * (1.0 - h) + acc * dt + kick) / (1.0 + h);
                self.x += self.v * dt;
            }
            Scheme::StochasticHeun => {
                let acc = |x: f64, v: f64, xa: f64| {
                    let mut a = -self.omega2 * x - gamma * v + fb_acc;
                    if let Some(at) = &self.atom {
                        a -= at.k_ma * xa;
                    }
                    a
                };
                let acc_atom = |x: f64, xa: f64, va: f64| match &self.atom {
                    Some(at) => -at.omega2 * xa - at.gamma * va - at.k_am * x,
                    None => 0.0,
                };
                let (x, v, xa, va) = (self.x, self.v, self.x_a, self.v_a);
                let a0 = acc(x, v, xa);
                let b0 = acc_atom(x, xa, va);
                let xp = x + v * dt;
                let vp = v + a0 * dt + kick;
                let xap = xa + va * dt;
                let vap = va + b0 * dt + kick_a;
                let a1 = acc(xp, vp, xap);
                let b1 = acc_atom(xp, xap, vap);
                self.x = x + 0.5 * (v + vp) * dt;
                self.v = v + 0.5 * (a0 + a1) * dt + kick;
                if self.atom.is_some() {
                    self.x_a = xa + 0.5 * (va + vap) * dt;
                    self.v_a = va + 0.5 * (b0 + b1) * dt + kick_a;
                }
            }
        }

        if !(self.x.is_finite() && self.v.is_finite() && self.x_a.is_finite()) {
            return Err(Error::Diverged { step: self.n });
        }
        self.n += 1;
        Ok(sample)
    }
}
