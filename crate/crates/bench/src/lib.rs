//! Shared fixtures for the benchmarks.

use optocool_core::model::detection_for_optimal_gain;
use optocool_core::sim::Simulation;
use optocool_core::{DetectionParams, MembraneParams, SimConfig};

/// 1 kHz, Q = 10³ oscillator with a detection floor putting g_opt at 100.
pub fn scaled() -> (MembraneParams, DetectionParams) {
    let p = MembraneParams::scaled();
    let d = detection_for_optimal_gain(&p, 100.0).expect("valid gain");
    (p, d)
}

/// In-loop record of `duration` seconds at 50 kHz with feedback gain `g`.
pub fn inloop_record(g: f64, duration: f64, seed: u64) -> Vec<f64> {
    let (p, d) = scaled();
    let sim = Simulation::new(p, SimConfig::new(50e3, duration, seed))
        .with_detection(d)
        .with_gains(g, 0.0);
    sim.run().expect("simulation").y
}
