#![allow(dead_code)]

use optocool_core::model::{detection_for_optimal_gain, DetectionParams, MembraneParams};
use optocool_core::sim::Simulation;
use optocool_core::spectral::{Spectrum, WelchAccumulator};

/// Detection noise that makes g_v = 100 optimal.
pub fn representative_detection(p: &MembraneParams) -> DetectionParams {
    detection_for_optimal_gain(p, 100.0).unwrap()
}

#[derive(Clone, Copy)]
pub enum Channel {
    X,
    Y,
}

/// Streams `averages` half-overlapped Hann segments through a Welch
/// estimator without keeping the trajectory. Also returns ⟨x²⟩ after
/// `settle` seconds.
pub fn streamed_psd(sim: &Simulation, ch: Channel, rbw: f64, settle: f64) -> (Spectrum, f64) {
    let fs = sim.config.sample_rate;
    let nseg = (1.5 * fs / rbw).round() as usize;
    let mut acc = WelchAccumulator::new(fs, nseg, 0.5).unwrap();
    let skip = (settle * fs) as usize;
    let (mut i, mut s2, mut n) = (0usize, 0.0, 0usize);
    sim.run_streaming(|s| {
        if i >= skip {
            acc.push(match ch {
                Channel::X => s.x,
                Channel::Y => s.y,
            });
            s2 += s.x * s.x;
            n += 1;
        }
        i += 1;
    })
    .unwrap();
    (acc.finish().unwrap(), s2 / n as f64)
}

/// Duration giving `averages` segments at 50% overlap, plus `settle`.
pub fn duration_for(fs: f64, rbw: f64, averages: usize, settle: f64) -> f64 {
    let nseg = (1.5 * fs / rbw).round();
    settle + (averages + 1) as f64 * nseg / 2.0 / fs
}
