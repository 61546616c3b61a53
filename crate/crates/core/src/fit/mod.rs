//! Least-squares extraction of gains, rates and temperatures from traces
//! and spectra.
//!
//! Spectra are fitted in log density so that the peak and the floor carry
//! comparable weight; temperature traces are fitted linearly with uniform
//! weights.

mod fitters;
mod lm;

pub use fitters::*;
pub use lm::{least_squares, LsqOptions, Param, ResidualScale};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagnostics attached to a fit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    NotConverged,
    RankDeficient,
    /// The trace covers fewer than three cooling time constants.
    TraceTooShort,
    /// The data carry no measurable signature of the fitted effect.
    Degenerate,
    /// A derived quantity lies outside the range spanned by the data.
    Extrapolated,
    /// The spectrum covers fewer effective linewidths than required.
    NarrowCoverage,
    NoPeak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: IndexMap<String, f64>,
    /// One standard error per parameter; absent when the Jacobian is rank
    /// deficient.
    pub stderr: Option<IndexMap<String, f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FitFlag>,
    /// Residual norm after each accepted step, starting from the initial point.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("fit has no parameter `{name}`")))
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        self.stderr.as_ref().and_then(|s| s.get(name).copied())
    }

    pub fn has_flag(&self, flag: &FitFlag) -> bool {
        self.flags.contains(flag)
    }

    pub(crate) fn flag(&mut self, flag: FitFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    /// Adds a derived quantity that was not itself a fit parameter.
    pub(crate) fn derive(&mut self, name: &str, value: f64, stderr: Option<f64>) {
        self.params.insert(name.to_string(), value);
        if let (Some(se), Some(v)) = (self.stderr.as_mut(), stderr) {
            se.insert(name.to_string(), v);
        }
    }
}
