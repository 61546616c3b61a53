use proptest::prelude::*;

use super::*;
use crate::consts::{hz_to_rad, HBAR, TWO_PI};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn paper() -> (MembraneParams, DetectionParams) {
    (MembraneParams::paper(), DetectionParams::paper())
}

#[test]
fn zero_point_motion_values() {
    let (p, _) = paper();
    // Independent evaluation: 6.4673e-16 m.
    assert!(rel(zero_point_motion(&p), 6.467_32e-16) < 1e-5);
    let heavier = p.with_mass(4.0 * p.mass);
    assert!(rel(zero_point_motion(&heavier), 0.5 * zero_point_motion(&p)) < 1e-14);
    let unit = MembraneParams { mass: 1.0, omega_m: 1.0, gamma_m: 0.1, t_bath: 1.0 };
    assert!(rel(zero_point_motion(&unit), (HBAR / 2.0).sqrt()) < 1e-15);
}

#[test]
fn thermal_occupation_values() {
    let w = hz_to_rad(264e3);
    let n = thermal_occupation(203e-6, w);
    assert!((n - 16.0).abs() < 0.5, "n = {n}");
    assert_eq!(thermal_occupation(0.0, w), 0.0);
    assert!(rel(thermal_occupation(0.5, w), 3.946e4) < 1e-3);
    assert!(rel(occupation_to_temperature(n, w), 203e-6) < 1e-14);
}

#[test]
fn cooldown_trace_limits() {
    let (p, _) = paper();
    for g in [0.0, 1.0, 50.0, 1e4] {
        assert_eq!(cooldown_trace(&p, g, 0.0), p.t_bath);
        assert!(rel(cooldown_trace(&p, g, 1e9), p.t_bath / (1.0 + g)) < 1e-15);
    }
    let t = 1.0 / (p.gamma_m * 101.0);
    assert!(rel(cooldown_trace(&p, 100.0, t), 0.187_069_03) < 1e-6);
}

#[test]
fn final_temperature_feedback_values() {
    let (p, d) = paper();
    assert_eq!(final_temperature_feedback(&p, &d, 0.0), p.t_bath);
    // Oracle: 5.00e-5 K thermal + 4.31e-5 K noise heating.
    assert!(rel(final_temperature_feedback(&p, &d, 1e4), 9.312_427_5e-5) < 1e-6);
    let quiet = DetectionParams { s_xn: 0.0 };
    assert_eq!(final_temperature_feedback(&p, &quiet, 37.0), p.t_bath / 38.0);
}

#[test]
fn optimal_gain_matches_grid_search() {
    let (p, d) = paper();
    let opt = optimal_feedback_gain(&p, &d).unwrap();
    // Grid-search oracle over g ∈ [1, 10⁶], 10⁶ log-spaced points.
    let n = 1_000_000;
    let (mut best_g, mut best_t) = (0.0, f64::INFINITY);
    for i in 0..=n {
        let g = 10f64.powf(6.0 * i as f64 / n as f64);
        let t = final_temperature_feedback(&p, &d, g);
        if t < best_t {
            best_t = t;
            best_g = g;
        }
    }
    assert!(rel(opt.g_opt, best_g) < 1e-4, "{} vs {}", opt.g_opt, best_g);
    assert!(rel(opt.t_min, best_t) < 1e-9);
    assert!(rel(opt.g_opt, 1.0766e4) < 1e-3);
    assert!(rel(opt.t_min, 9.287e-5) < 1e-3);
}

#[test]
fn optimal_gain_is_stationary() {
    let (p, d) = paper();
    let opt = optimal_feedback_gain(&p, &d).unwrap();
    let h = opt.g_opt * 1e-6;
    let f = |g| final_temperature_feedback(&p, &d, g);
    let deriv = (f(opt.g_opt + h) - f(opt.g_opt - h)) / (2.0 * h);
    // Scale of the individual terms' derivatives: T_b/(1+g)².
    let scale = p.t_bath / (1.0 + opt.g_opt).powi(2);
    assert!(deriv.abs() / scale < 1e-9, "relative derivative {}", deriv / scale);
    for s in [1.0 - 1e-3, 1.0 + 1e-3] {
        assert!(f(opt.g_opt * s) >= opt.t_min);
    }
}

#[test]
fn detection_for_optimal_gain_inverts() {
    let p = MembraneParams::scaled();
    for g in [1.0, 100.0, 1e4] {
        let d = detection_for_optimal_gain(&p, g).unwrap();
        assert!(rel(optimal_feedback_gain(&p, &d).unwrap().g_opt, g) < 1e-12);
    }
    assert!(detection_for_optimal_gain(&p, 0.0).is_err());
}

#[test]
fn optimal_gain_scaling_and_errors() {
    let (p, d) = paper();
    let g1 = optimal_feedback_gain(&p, &d).unwrap().g_opt;
    let g4 = optimal_feedback_gain(&p.with_t_bath(4.0 * p.t_bath), &d).unwrap().g_opt;
    assert!(rel(g4 + 1.0, 2.0 * (g1 + 1.0)) < 1e-4);
    assert!(matches!(
        optimal_feedback_gain(&p, &DetectionParams { s_xn: 0.0 }),
        Err(Error::UnboundedGain)
    ));
}

#[test]
fn combined_optimum_is_minimum() {
    let (p, d) = paper();
    let opt = optimal_feedback_gain_combined(&p, &d, 170.0).unwrap();
    let f = |g| final_temperature_combined(&p, &d, CoolingGains::new(g, 170.0));
    for s in [1.0 - 1e-3, 1.0 + 1e-3] {
        assert!(f(opt.g_opt * s) >= opt.t_min);
    }
}

#[test]
fn coupling_rate_values() {
    let p = MembraneParams::paper();
    let a = AtomCouplingParams {
        n_atoms: 1e8,
        mass_atom: 1.443e-25,
        omega_a: p.omega_m,
        gamma_a: 0.11 * p.omega_m,
        reflectivity: 0.42,
        finesse: 160.0,
    };
    // Independent evaluation of |r|²·ω_a·√(N m_a ω_a/(m ω_m))·2F/π.
    let expected = 0.42f64.powi(2) * p.omega_m * (1e8 * 1.443e-25 / 76e-12f64).sqrt() * 320.0 / std::f64::consts::PI;
    assert!(rel(coupling_rate_gn(&a, &p), expected) < 1e-12);
    assert!(rel(expected, 1.2987e4) < 1e-3);
    assert_eq!(coupling_rate_gn(&a.with_n_atoms(0.0), &p), 0.0);
    assert!(rel(coupling_rate_gn(&a.with_n_atoms(4e8), &p), 2.0 * expected) < 1e-14);
}

#[test]
fn sympathetic_rate_shape() {
    let (g, ga, wm) = (50.0, 2.0e4, 1.6e6);
    let peak = sympathetic_rate(g, ga, wm, wm);
    assert!(rel(peak, 4.0 * g * g / ga) < 1e-15);
    assert!(rel(sympathetic_rate(g, ga, wm + ga / 2.0, wm), 0.5 * peak) < 1e-14);
    assert!(rel(sympathetic_rate(g, ga, wm - ga / 2.0, wm), 0.5 * peak) < 1e-14);
}

#[test]
fn cooperativity_anchor() {
    let gamma_m = hz_to_rad(24.5e-3);
    // Γ_sym = 4g²/Γ_a on resonance; pick g so that Γ_sym = 23.3 s⁻¹.
    let gamma_a = 0.11 * hz_to_rad(264e3);
    let g = (23.3 * gamma_a / 4.0).sqrt();
    let c = hybrid_cooperativity(g, gamma_a, gamma_m);
    assert!((c - 151.36).abs() < 0.01, "C = {c}");
    assert!((140.0..=160.0).contains(&c));
    assert_eq!(hybrid_cooperativity(0.0, gamma_a, gamma_m), 0.0);
}

#[test]
fn paper_atoms_give_reported_rate() {
    let p = MembraneParams::paper();
    let a = AtomCouplingParams::paper(&p);
    let rate = sympathetic_rate_for(&a, &p).unwrap();
    assert!((rate - 23.3).abs() < 0.5, "Γ_sym = {rate}");
    let mut bad = a;
    bad.gamma_a = 0.0;
    assert!(sympathetic_rate_for(&bad, &p).is_err());
}

#[test]
fn min_temp_sympathetic_values() {
    let (p, _) = paper();
    assert_eq!(min_temp_sympathetic(0.5, 0.0, p.gamma_m), 0.5);
    assert!(rel(min_temp_sympathetic(0.5, 170.0 * p.gamma_m, p.gamma_m), 2.923_976_6e-3) < 1e-7);
    let g = gamma_sym_from_min_temp(0.5, 0.02, p.gamma_m);
    assert!(rel(g, 3.6945) < 1e-4);
    assert!(rel(min_temp_sympathetic(0.5, g, p.gamma_m), 0.02) < 1e-14);
}

#[test]
fn combined_reduces_exactly() {
    let (p, d) = paper();
    for g in [0.0, 0.5, 10.0, 1e4] {
        assert_eq!(
            final_temperature_combined(&p, &d, CoolingGains::feedback(g)),
            final_temperature_feedback(&p, &d, g)
        );
        let gamma_sym = g * p.gamma_m;
        assert_eq!(
            final_temperature_combined(&p, &d, CoolingGains::sympathetic(gamma_sym / p.gamma_m)),
            min_temp_sympathetic(p.t_bath, gamma_sym, p.gamma_m)
        );
    }
}

#[test]
fn combined_curve_shape() {
    let (p, d) = paper();
    let g_s = 170.0;
    for g_v in [1.0, 10.0, 50.0, 100.0] {
        let pure = final_temperature_feedback(&p, &d, g_v);
        let comb = final_temperature_combined(&p, &d, CoolingGains::new(g_v, g_s));
        assert!(comb < 0.8 * pure, "g_v = {g_v}");
    }
    for g_v in [1e4, 3e4, 1e5] {
        let pure = final_temperature_feedback(&p, &d, g_v);
        let comb = final_temperature_combined(&p, &d, CoolingGains::new(g_v, g_s));
        assert!(comb < pure && comb > 0.95 * pure, "g_v = {g_v}");
    }
}

#[test]
fn susceptibility_limits() {
    let p = MembraneParams::scaled();
    let dc = susceptibility_mech(0.0, &p, p.gamma_m);
    assert!(rel(dc.re, 1.0 / p.spring_constant()) < 1e-15);
    assert_eq!(dc.im, 0.0);
    let res = susceptibility_mech(p.omega_m, &p, p.gamma_m);
    assert!(res.re.abs() < 1e-12 * res.im.abs());
    assert!(rel(res.norm(), p.quality_factor() / p.spring_constant()) < 1e-12);
}

#[test]
fn susceptibility_fwhm_matches_damping() {
    // Numeric scan of |χ|² for its half-maximum points.
    let p = MembraneParams::scaled().with_quality_factor(1e4);
    let peak = susceptibility_mech(p.omega_m, &p, p.gamma_m).norm_sqr();
    let half = |w: f64| susceptibility_mech(w, &p, p.gamma_m).norm_sqr() - 0.5 * peak;
    let bisect = |mut lo: f64, mut hi: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if half(lo).signum() == half(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let lo = bisect(p.omega_m - 5.0 * p.gamma_m, p.omega_m);
    let hi = bisect(p.omega_m, p.omega_m + 5.0 * p.gamma_m);
    assert!(rel(hi - lo, p.gamma_m) < 1e-3);
}

#[test]
fn thermal_force_values() {
    let (p, _) = paper();
    assert!(rel(thermal_force_psd(&p), 3.230_52e-34) < 1e-5);
    assert_eq!(thermal_force_psd(&p.with_t_bath(0.0)), 0.0);
}

#[test]
fn thermal_spectrum_closes_to_equipartition() {
    for p in [MembraneParams::paper(), MembraneParams::scaled()] {
        let var = crate::quad::integrate_resonance(
            |w| susceptibility_mech(w, &p, p.gamma_m).norm_sqr() * thermal_force_psd(&p),
            p.omega_m,
            p.gamma_m,
            1e-10,
        ) / TWO_PI;
        assert!(rel(var, temperature_to_variance(&p, p.t_bath)) < 1e-3);
        let d = DetectionParams { s_xn: 0.0 };
        assert!(rel(integrated_temperature(&p, &d, CoolingGains::default()), p.t_bath) < 1e-6);
    }
}

#[test]
fn out_of_loop_noise_floor() {
    let (p, d) = paper();
    for g_v in [1e3, 1e4, 1e5] {
        let gains = CoolingGains::feedback(g_v);
        let s = psd_out_of_loop(p.omega_m, &p, &d, gains);
        let floor = (g_v / (1.0 + g_v)).powi(2) * d.s_xn;
        assert!(s > floor);
        let thermal = thermal_force_psd(&p) / (p.mass * p.omega_m * p.gamma_m * (1.0 + g_v)).powi(2);
        assert!(rel(s, floor + thermal) < 1e-12);
    }
}

#[test]
fn in_loop_at_zero_gain_is_thermal_plus_floor() {
    let (p, d) = paper();
    for w in [0.5 * p.omega_m, p.omega_m, p.omega_m + 3.0 * p.gamma_m, 2.0 * p.omega_m] {
        let s_y = psd_in_loop(w, &p, &d, CoolingGains::default());
        let s_x = psd_out_of_loop(w, &p, &d, CoolingGains::default());
        assert!(rel(s_y, s_x + d.s_xn) < 1e-12);
    }
}

#[test]
fn in_loop_squashing() {
    let (p, d) = paper();
    // At these parameters the peak-to-floor ratio is ~1.2e8, so squashing
    // needs g_v above ~1.1e4.
    let threshold = (thermal_force_psd(&p) / (p.mass * p.omega_m * p.gamma_m).powi(2) / d.s_xn + 1.0).sqrt() - 1.0;
    assert!(rel(threshold, 1.077e4) < 1e-2, "threshold = {threshold}");
    assert!(psd_in_loop(p.omega_m, &p, &d, CoolingGains::feedback(1.01 * threshold)) < d.s_xn);
    assert!(psd_in_loop(p.omega_m, &p, &d, CoolingGains::feedback(0.99 * threshold)) > d.s_xn);
    assert!(psd_in_loop(p.omega_m, &p, &d, CoolingGains::feedback(1.0)) > d.s_xn);
    // In-loop minus out-of-loop at resonance: |χ_s|⁻² − |χ_fb|⁻² changes
    // sign where the feedback gain overtakes the intrinsic damping, g_v = 1 + g_s.
    let diff = |g| {
        let gains = CoolingGains::feedback(g);
        psd_in_loop(p.omega_m, &p, &d, gains) - psd_out_of_loop(p.omega_m, &p, &d, gains)
    };
    assert!(diff(0.5) > 0.0);
    assert!(diff(2.0) < 0.0);
    assert!(diff(1e4) < 0.0);
}

#[test]
fn ground_state_values() {
    let (p, d) = paper();
    let r = ground_state_feasible(&p, &d);
    assert!(!r.feasible);
    assert!(rel(r.bound, 2.755e-34) < 1e-3, "bound = {}", r.bound);
    assert!(rel(r.margin, 0.037_23) < 1e-3, "margin = {}", r.margin);
    let better = p.with_quality_factor(10.0 * p.quality_factor()).with_mass(0.1 * p.mass);
    let r2 = ground_state_feasible(&better, &d);
    assert!(r2.feasible);
    assert!(rel(r2.margin / r.margin, 100.0) < 1e-12);
    let r3 = ground_state_feasible(&p, &DetectionParams { s_xn: 0.0 });
    assert!(r3.feasible && r3.margin.is_infinite());
}

#[test]
fn projections() {
    let (p, d) = paper();
    let a = AtomCouplingParams::paper(&p);
    let sets = Improvement::standard_set();
    let both = project(&p, &d, &a, &sets[2]);
    assert!(rel(both.c_hybrid_ratio, 100.0) < 1e-12);
    assert!(rel(both.margin_ratio, 100.0) < 1e-12);
    assert!(!both.feasible_before && both.feasible_after);
    let fin = project(&p, &d, &a, &sets[3]);
    assert!(rel(fin.c_hybrid_ratio, (850.0f64 / 160.0).powi(2)) < 1e-12);
    assert!(rel(fin.margin_ratio, 1.0) < 1e-15);
}

#[test]
fn atom_decay_trace() {
    let p = MembraneParams::paper();
    let a = AtomCouplingParams::paper(&p);
    let long = AtomDecayModel { n0: a.n_atoms, tau: 1e30 };
    let t0 = atom_decay_temperature_trace(&p, &a, &long, 0.0).unwrap();
    let t1 = atom_decay_temperature_trace(&p, &a, &long, 10.0).unwrap();
    assert!(rel(t1, t0) < 1e-12);
    // Crossover where Γ_sym(t) = Γ_m.
    let decay = AtomDecayModel { n0: a.n_atoms, tau: 2.0 };
    let g_s0 = sympathetic_rate_for(&a, &p).unwrap() / p.gamma_m;
    let t_cross = decay.tau * g_s0.ln();
    let t = atom_decay_temperature_trace(&p, &a, &decay, t_cross).unwrap();
    assert!(rel(t, 0.5 * p.t_bath) < 1e-10);
    assert!(rel(decay_trace_from_gain(p.t_bath, g_s0, 2.0, 1.3), atom_decay_temperature_trace(&p, &a, &decay, 1.3).unwrap()) < 1e-12);
}

fn membrane_strategy() -> impl Strategy<Value = MembraneParams> {
    (1e-13..1e-9f64, 1e3..1e6f64, 1e2..1e8f64, 1e-3..1.0f64).prop_map(|(m, f, q, t)| {
        MembraneParams { mass: m, omega_m: hz_to_rad(f), gamma_m: hz_to_rad(f) / q, t_bath: t }
    })
}

proptest! {
    #[test]
    fn cooldown_monotone(g in 0.0..1e4f64, t1 in 0.0..100.0f64, dt in 0.0..100.0f64) {
        let p = MembraneParams::paper();
        prop_assert!(cooldown_trace(&p, g, t1 + dt) <= cooldown_trace(&p, g, t1));
    }

    #[test]
    fn cooperativity_identity(g in 1e-3..1e5f64, ga in 1e-2..1e6f64, gm in 1e-3..1e3f64, wm in 1e2..1e7f64) {
        let c = hybrid_cooperativity(g, ga, gm);
        let via_rate = sympathetic_rate(g, ga, wm, wm) / gm;
        prop_assert!(((c - via_rate) / c).abs() < 1e-14);
    }

    #[test]
    fn sympathetic_rate_linear_in_n(n in 1.0..1e9f64, scale in 1.0..10.0f64) {
        let p = MembraneParams::paper();
        let a = AtomCouplingParams::paper(&p).with_n_atoms(n);
        let r1 = sympathetic_rate_for(&a, &p).unwrap();
        let r2 = sympathetic_rate_for(&a.with_n_atoms(scale * n), &p).unwrap();
        prop_assert!(((r2 / r1 - scale) / scale).abs() < 1e-12);
    }

    #[test]
    fn combined_reduction_identities(p in membrane_strategy(), s in 0.0..1e-25f64, g in 0.0..1e5f64, r in 0.0..1e5f64) {
        let d = DetectionParams { s_xn: s };
        prop_assert_eq!(final_temperature_combined(&p, &d, CoolingGains::feedback(g)), final_temperature_feedback(&p, &d, g));
        let gamma_sym = r * p.gamma_m;
        prop_assert_eq!(
            final_temperature_combined(&p, &d, CoolingGains::sympathetic(gamma_sym / p.gamma_m)),
            min_temp_sympathetic(p.t_bath, gamma_sym, p.gamma_m)
        );
    }

    #[test]
    fn margin_scales_with_q_over_m(p in membrane_strategy(), qf in 1.0..100.0f64, mf in 0.01..1.0f64) {
        let d = DetectionParams::paper();
        let base = ground_state_feasible(&p, &d).margin;
        let up = MembraneParams { mass: p.mass * mf, gamma_m: p.gamma_m / qf, ..p };
        let ratio = ground_state_feasible(&up, &d).margin / base;
        prop_assert!((ratio / (qf / mf) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn relaxing_decay_trace_limits() {
    // Without atoms the membrane stays at the bath.
    assert!(rel(decay_trace_relaxing(0.5, 0.0, 1.0, 3.0, 0.7), 0.5) < 1e-9);
    assert_eq!(decay_trace_relaxing(0.5, 20.0, 1.0, 3.0, -0.1), 0.5);
    // A fast membrane follows the instantaneous minimum.
    let quasi = decay_trace_from_gain(0.5, 20.0, 1.0, 1.5);
    assert!(rel(decay_trace_relaxing(0.5, 20.0, 1.0, 1e5, 1.5), quasi) < 1e-3);
    // A slow one lags behind it while the atoms leave.
    assert!(decay_trace_relaxing(0.5, 20.0, 1.0, 2.0, 1.5) < quasi);
}

#[test]
fn relaxing_decay_trace_matches_cooldown_for_long_lifetime() {
    let p = MembraneParams::scaled();
    let t = 0.05;
    let slow = decay_trace_relaxing(p.t_bath, 12.0, 1e9, p.gamma_m, t);
    assert!(rel(slow, cooldown_trace(&p, 12.0, t)) < 1e-7);
}
