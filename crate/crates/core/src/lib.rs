//! Simulation and analysis toolkit for a feedback-cooled membrane oscillator
//! that is sympathetically coupled to a laser-cooled atomic ensemble.
//!
//! The crate is organised in layers:
//!
//! - [`model`]: closed-form susceptibilities, spectra, temperatures, rates and
//!   feasibility criteria.
//! - [`sim`]: stochastic time-domain integration of the membrane (and an
//!   optional explicit atom mode) with a noisy velocity-feedback loop.
//! - [`spectral`]: Welch and zoom PSD estimation, band power and zero-span
//!   temperature traces.
//! - [`fit`]: damped least squares and the fitters that turn traces and
//!   spectra into gains, rates and temperatures.
//! - [`io`]: trajectory, spectrum, trace and fit-result export formats.
//!
//! Units: every rate and frequency inside the library is angular (rad/s)
//! unless a name ends in `_hz`. Spectra are one-sided densities.

pub mod consts;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod quad;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};

pub use model::{
    AtomCouplingParams, AtomDecayModel, CoolingGains, DetectionParams, FeedbackParams,
    MembraneParams,
};

pub use sim::{SimConfig, Trajectory};
pub use spectral::{Spectrum, ZeroSpanTrace};
pub use fit::{FitFlag, FitResult};
