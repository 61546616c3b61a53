use serde::{Deserialize, Serialize};

use super::engine::Sample;

/// Gains in force from `start` until the next stage begins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// s.
    pub start: f64,
    pub gain_v: f64,
    /// rad/s.
    pub gamma_sym: f64,
}

impl Stage {
    pub fn new(start: f64, gain_v: f64, gamma_sym: f64) -> Self {
        Self { start, gain_v, gamma_sym }
    }
}

/// Uniformly sampled record of a run. Sample `i` is at `t0 + i·dt`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    /// True membrane displacement, m.
    pub x: Vec<f64>,
    /// m/s.
    pub v: Vec<f64>,
    /// Measured signal x + x_n, m.
    pub y: Vec<f64>,
    pub x_a: Option<Vec<f64>>,
    pub v_a: Option<Vec<f64>>,
    /// Stage boundaries the run went through.
    pub stages: Vec<Stage>,
}

impl Trajectory {
    pub(crate) fn with_capacity(dt: f64, t0: f64, n: usize, atoms: bool) -> Self {
        Self {
            dt,
            t0,
            x: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            x_a: atoms.then(|| Vec::with_capacity(n)),
            v_a: atoms.then(|| Vec::with_capacity(n)),
            stages: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, s: &Sample) {
        self.x.push(s.x);
        self.v.push(s.v);
        self.y.push(s.y);
        if let (Some(xa), Some(va)) = (self.x_a.as_mut(), self.v_a.as_mut()) {
            xa.push(s.x_a);
            va.push(s.v_a);
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// First index at or after time `t`, clamped to the record.
    pub fn index_at(&self, t: f64) -> usize {
        let i = ((t - self.t0) / self.dt).ceil().max(0.0) as usize;
        i.min(self.len())
    }

    /// Named series in export order.
    pub fn columns(&self) -> Vec<(&'static str, &[f64])> {
        let mut cols: Vec<(&'static str, &[f64])> = vec![("x", &self.x), ("v", &self.v), ("y", &self.y)];
        if let (Some(xa), Some(va)) = (&self.x_a, &self.v_a) {
            cols.push(("x_a", xa));
            cols.push(("v_a", va));
        }
        cols
    }

    /// Every `stride`-th sample. No anti-alias filtering; meant for export
    /// and plotting, not further spectral analysis.
    pub fn decimate(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let pick = |s: &[f64]| s.iter().step_by(stride).copied().collect::<Vec<_>>();
        Trajectory {
            dt: self.dt * stride as f64,
            t0: self.t0,
            x: pick(&self.x),
            v: pick(&self.v),
            y: pick(&self.y),
            x_a: self.x_a.as_deref().map(pick),
            v_a: self.v_a.as_deref().map(pick),
            stages: self.stages.clone(),
        }
    }
}
