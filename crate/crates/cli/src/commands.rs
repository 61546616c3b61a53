use std::path::{Path, PathBuf};
use std::time::Instant;

use optocool_core::consts::rad_to_hz;
use optocool_core::io::{write_fit_json, write_spectrum_csv, write_table_csv, write_trace_csv, write_trajectory, write_trajectory_csv};
use optocool_core::model::{
    coupling_rate_gn, final_temperature_combined, ground_state_feasible, hybrid_cooperativity, optimal_feedback_gain,
    project, sympathetic_rate_for, thermal_occupation, CoolingGains, Improvement, Projection,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::pipeline::{fit_step, steady_chain, steady_mean, tail_spectrum, zero_span_ensemble, ChainResult};
use crate::scenario::Scenario;

/// Largest trajectory CSV written by `simulate`, in rows.
const CSV_ROWS: usize = 20_000;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub scenario: String,
    pub hash: String,
    pub runs: usize,
    pub samples: usize,
    /// Mean zero-span temperature over the settled part of the final stage, K.
    pub steady_band_temperature: f64,
    /// Closed-form steady state for the final-stage gains, K.
    pub model_temperature: f64,
    /// Cooldown fit when the schedule is a single gain step.
    pub step_fit_g: Option<f64>,
    pub step_expected_g: Option<f64>,
    pub runtime_s: f64,
    pub files: Vec<String>,
}

pub fn simulate(scn: &Scenario, out: &Path) -> Result<SimulateSummary, CliError> {
    ensure_dir(out)?;
    let started = Instant::now();
    let p = scn.membrane;
    let stages = scn.stages()?;
    let (tr, zs) = zero_span_ensemble(scn)?;
    let last = *stages.last().expect("stage");
    let (g_v, g_s) = scn.final_gains()?;
    let gamma_eff = p.gamma_m * (1.0 + g_v + g_s);
    let settle = scn.analysis.settle.unwrap_or(10.0 / gamma_eff);
    let steady = steady_mean(&zs, last.start + settle);
    let model = final_temperature_combined(&p, &scn.detection, CoolingGains::new(g_v, g_s));

    let header = scn.provenance();
    let mut files = vec![];
    let mut step = None;
    // A single step from zero gain is a cooldown experiment.
    if stages.len() == 2 && stages[0].gain_v == 0.0 && stages[0].gamma_sym == 0.0 {
        let fit = fit_step(&zs, stages[1].start, p.gamma_m)?;
        write_fit_json(&out.join("cooldown_fit.json"), &fit)?;
        files.push("cooldown_fit.json".to_string());
        let expected = stages[1].gain_v + stages[1].gamma_sym / p.gamma_m;
        step = Some((fit.get("g").unwrap_or(f64::NAN), expected));
    }

    let stride = scn.analysis.stride.unwrap_or(1).max(1);
    let meta = json!({
        "scenario": scn.name,
        "hash": scn.hash,
        "version": env!("CARGO_PKG_VERSION"),
        "stride": stride,
        "annotations": scn.annotations,
    });
    write_trajectory(&out.join("trajectory.otj"), &tr.decimate(stride), meta)?;
    let csv_stride = tr.len().div_ceil(CSV_ROWS).max(stride);
    write_trajectory_csv(&out.join("trajectory.csv"), &tr, csv_stride, &header)?;
    write_trace_csv(&out.join("zero_span.csv"), &zs, &header)?;
    files.extend(["trajectory.otj", "trajectory.csv", "zero_span.csv"].map(String::from));

    let f_m = rad_to_hz(p.omega_m);
    let lw = rad_to_hz(gamma_eff);
    let from = tr.index_at(last.start + settle);
    if tr.len() > from + 64 {
        let rbw = scn.analysis.rbw.unwrap_or(lw / 5.0);
        let s = tail_spectrum(&tr.y, tr.sample_rate(), from, rbw)?;
        let band = s.slice((f_m - 20.0 * lw).max(0.0), (f_m + 20.0 * lw).min(0.5 * tr.sample_rate()));
        write_spectrum_csv(&out.join("spectrum.csv"), &band, &header)?;
        files.push("spectrum.csv".to_string());
    }

    let summary = SimulateSummary {
        scenario: scn.name.clone(),
        hash: scn.hash.clone(),
        runs: scn.analysis.runs.unwrap_or(1).max(1),
        samples: tr.len(),
        steady_band_temperature: steady,
        model_temperature: model,
        step_fit_g: step.map(|s| s.0),
        step_expected_g: step.map(|s| s.1),
        runtime_s: started.elapsed().as_secs_f64(),
        files,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(flatten)]
    pub chain: ChainResult,
    /// Closed-form temperature for the point's nominal gains, K.
    pub t_model: f64,
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "value", "g_v_fit", "g_s_fit", "t_final_k", "n_bar", "t_direct_k", "t_model_k", "sample_rate_hz", "rbw_hz", "n_averages",
];

impl SweepRow {
    pub fn cells(&self) -> Vec<f64> {
        let c = &self.chain;
        vec![
            self.value,
            c.g_v_fit.unwrap_or(f64::NAN),
            c.g_s_fit.unwrap_or(f64::NAN),
            c.t_final,
            c.n_bar,
            c.t_direct,
            self.t_model,
            c.sample_rate,
            c.rbw,
            c.n_averages as f64,
        ]
    }
}

/// Scenario for sweep point `index`: the override applied and the seed
/// replaced by `seed ⊕ index`.
pub fn sweep_point(text: &str, key: &str, value: f64, base_seed: u64, index: usize) -> Result<Scenario, CliError> {
    Scenario::parse_with(text, &[(key.to_string(), value)], Some(base_seed ^ index as u64))
}

pub fn run_point(scn: &Scenario, value: f64) -> Result<SweepRow, CliError> {
    let chain = steady_chain(scn)?;
    let (g_v, g_s) = scn.final_gains()?;
    let t_model = final_temperature_combined(&scn.membrane, &scn.detection, CoolingGains::new(g_v, g_s));
    Ok(SweepRow { value, chain, t_model })
}

pub fn sweep(path: &Path, key: &str, values: &[f64], seed: Option<u64>, out: &Path) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::input("--values is empty"));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read scenario {}: {e}", path.display())))?;
    let base = Scenario::parse_with(&text, &[], seed).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    // Resolve every point before running any, so a bad key fails fast.
    let points: Vec<Scenario> = values
        .iter()
        .enumerate()
        .map(|(i, v)| sweep_point(&text, key, *v, base.seed, i))
        .collect::<Result<_, _>>()?;
    ensure_dir(out)?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .zip(values.par_iter())
        .map(|(scn, v)| run_point(scn, *v))
        .collect::<Result<_, _>>()?;
    let mut header = base.provenance();
    header.push(format!("param = {key}"));
    let cells: Vec<Vec<f64>> = rows.iter().map(|r| r.cells()).collect();
    write_table_csv(&out.join("sweep.csv"), &SWEEP_COLUMNS, &cells, &header)?;
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub hash: String,
    pub n_th: f64,
    pub ground_state_feasible: bool,
    /// Bound over S_xn; > 1 means feasible.
    pub ground_state_margin: f64,
    pub ground_state_bound: f64,
    pub g_opt: Option<f64>,
    pub t_min: Option<f64>,
    pub n_min: Option<f64>,
    pub atoms: Option<AtomReport>,
    pub projections: Vec<Projection>,
}

#[derive(Debug, Serialize)]
pub struct AtomReport {
    /// rad/s.
    pub g_n: f64,
    /// At the scenario's ω_a, s⁻¹.
    pub gamma_sym: f64,
    /// Γ_sym/Γ_m at the scenario's ω_a.
    pub c_hybrid: f64,
    /// 4g_N²/(Γ_a Γ_m), the value Γ_sym/Γ_m would take with ω_a tuned to ω_m
    /// at the same g_N.
    pub c_hybrid_resonant: f64,
    pub strong_coupling: bool,
}

pub fn check(scn: &Scenario) -> Result<CheckReport, CliError> {
    let p = scn.membrane;
    let d = scn.detection;
    let gs = ground_state_feasible(&p, &d);
    let n_th = thermal_occupation(p.t_bath, p.omega_m);
    let opt = optimal_feedback_gain(&p, &d).ok();
    let atoms = match scn.atoms {
        Some(a) => {
            let g_n = coupling_rate_gn(&a, &p);
            let gamma_sym = sympathetic_rate_for(&a, &p)?;
            let c = gamma_sym / p.gamma_m;
            Some(AtomReport {
                g_n,
                gamma_sym,
                c_hybrid: c,
                c_hybrid_resonant: hybrid_cooperativity(g_n, a.gamma_a, p.gamma_m),
                strong_coupling: c > n_th,
            })
        }
        None => None,
    };
    let projections = match scn.atoms {
        Some(a) => Improvement::standard_set().iter().map(|imp| project(&p, &d, &a, imp)).collect(),
        None => vec![],
    };
    Ok(CheckReport {
        scenario: scn.name.clone(),
        hash: scn.hash.clone(),
        n_th,
        ground_state_feasible: gs.feasible,
        ground_state_margin: gs.margin,
        ground_state_bound: gs.bound,
        g_opt: opt.map(|o| o.g_opt),
        t_min: opt.map(|o| o.t_min),
        n_min: opt.map(|o| thermal_occupation(o.t_min, p.omega_m)),
        atoms,
        projections,
    })
}

pub fn print_check(r: &CheckReport) {
    println!("scenario {} ({})", r.scenario, r.hash);
    println!("thermal occupation n_th        {:.4e}", r.n_th);
    println!(
        "ground-state criterion         {} (margin {:.4e}, bound {:.4e} m^2/Hz)",
        if r.ground_state_feasible { "feasible" } else { "infeasible" },
        r.ground_state_margin,
        r.ground_state_bound
    );
    if let (Some(g), Some(t), Some(n)) = (r.g_opt, r.t_min, r.n_min) {
        println!("feedback optimum               g_opt {g:.4e}, T_min {t:.4e} K, n {n:.3}");
    }
    match &r.atoms {
        Some(a) => {
            println!("coupling g_N                   {:.4e} s^-1", a.g_n);
            println!("sympathetic rate Gamma_sym     {:.4e} s^-1", a.gamma_sym);
            println!("hybrid cooperativity C_hybrid  {:.4e} (Gamma_sym/Gamma_m)", a.c_hybrid);
            println!("  at omega_a = omega_m         {:.4e} (4 g_N^2/(Gamma_a Gamma_m))", a.c_hybrid_resonant);
            println!(
                "strong coupling (C > n_th)     {}",
                if a.strong_coupling { "yes" } else { "no" }
            );
        }
        None => println!("no [atoms] table; coupling figures skipped"),
    }
    if !r.projections.is_empty() {
        println!();
        println!("{:<12} {:>12} {:>12} {:>12} {:>10} {:>8}", "upgrade", "C_hybrid", "C ratio", "margin", "m ratio", "ground");
        let c0 = r.atoms.as_ref().map_or(f64::NAN, |a| a.c_hybrid);
        for pr in &r.projections {
            println!(
                "{:<12} {:>12.4e} {:>12.4} {:>12.4e} {:>10.4} {:>8}",
                pr.label,
                c0 * pr.c_hybrid_ratio,
                pr.c_hybrid_ratio,
                pr.margin_after,
                pr.margin_ratio,
                if pr.feasible_after { "yes" } else { "no" }
            );
        }
    }
}

pub fn default_out(sub: &str) -> PathBuf {
    PathBuf::from("out").join(sub)
}
