//! Scenario files.
//!
//! A scenario is a TOML document. Every frequency and linewidth in the file
//! is in Hz (ordinary, not angular) and is converted to rad/s at load; times
//! are in seconds, masses in kg, temperatures in K and the detection floor in
//! m²/Hz. Gains are dimensionless multiples of Γ_m.
//!
//! ```toml
//! name = "thermal"
//! seed = 1
//!
//! [membrane]
//! mass = 76e-12
//! frequency = 1000.0       # Hz
//! quality_factor = 20.0    # or: linewidth = 50.0 (Hz)
//! t_bath = 0.5
//!
//! [detection]
//! s_xn = 0.0
//!
//! [feedback]
//! gain_v = 0.0
//!
//! [sim]
//! sample_rate = 50000.0
//! duration = 100.0
//!
//! [analysis]
//! zero_span_bandwidth = 1600.0
//! bin = 10.0
//!
//! [annotations]
//! note = "free-form strings, carried into metadata"
//! ```
//!
//! Optional tables: `[atoms]` (n_atoms, frequency, linewidth, reflectivity,
//! finesse, mass_atom), `[decay]` (n0, tau) and an array of `[[stages]]`
//! (start, gain_v, gain_s). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use optocool_core::consts::{hz_to_rad, rad_to_hz, MASS_RB87};
use optocool_core::model::{
    sympathetic_rate_for, AtomCouplingParams, AtomDecayModel, DetectionParams, FeedbackParams,
    MembraneParams,
};
use optocool_core::sim::{CouplingMode, InitialState, Scheme, SimConfig, Simulation, Stage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    membrane: MembraneSection,
    #[serde(default)]
    detection: DetectionSection,
    #[serde(default)]
    feedback: FeedbackSection,
    atoms: Option<AtomSection>,
    decay: Option<DecaySection>,
    sim: SimSection,
    #[serde(default)]
    stages: Vec<StageSection>,
    #[serde(default)]
    analysis: Analysis,
    #[serde(default)]
    annotations: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MembraneSection {
    mass: f64,
    frequency: f64,
    linewidth: Option<f64>,
    quality_factor: Option<f64>,
    t_bath: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DetectionSection {
    #[serde(default)]
    s_xn: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FeedbackSection {
    #[serde(default)]
    gain_v: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct AtomSection {
    n_atoms: f64,
    frequency: f64,
    linewidth: f64,
    reflectivity: f64,
    finesse: f64,
    mass_atom: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DecaySection {
    n0: Option<f64>,
    tau: f64,
    /// Length of the piecewise-constant steps approximating the decay, s.
    step: Option<f64>,
    /// Time the atoms are loaded, s.
    #[serde(default)]
    start: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    sample_rate: f64,
    duration: f64,
    #[serde(default)]
    start: f64,
    #[serde(default)]
    scheme: Scheme,
    #[serde(default)]
    coupling: CouplingMode,
    band_limit: Option<f64>,
    #[serde(default)]
    loop_delay: f64,
    #[serde(default)]
    atom_temperature: f64,
    #[serde(default)]
    initial: InitialState,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct StageSection {
    start: f64,
    #[serde(default)]
    gain_v: f64,
    #[serde(default)]
    gain_s: f64,
}

/// Analysis settings; every field has an automatic default derived from the
/// effective linewidth of the final stage.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    /// Welch resolution bandwidth, Hz.
    pub rbw: Option<f64>,
    /// Welch averages used by sweeps to size each run.
    pub averages: Option<usize>,
    /// Time discarded before steady-state estimates, s.
    pub settle: Option<f64>,
    /// Zero-span filter bandwidth, Hz.
    pub zero_span_bandwidth: Option<f64>,
    /// Zero-span bin length, s.
    pub bin: Option<f64>,
    /// Independent runs averaged into the zero-span trace.
    pub runs: Option<usize>,
    /// Keep every n-th sample in the exported trajectory.
    pub stride: Option<usize>,
}

/// A loaded and validated scenario in SI / angular units.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub membrane: MembraneParams,
    pub detection: DetectionParams,
    pub feedback: FeedbackParams,
    pub atoms: Option<AtomCouplingParams>,
    pub decay: Option<AtomDecayModel>,
    pub sim: SimConfig,
    pub analysis: Analysis,
    pub annotations: BTreeMap<String, String>,
    /// First 16 hex digits of the SHA-256 of the resolved document.
    pub hash: String,
    stages: Vec<Stage>,
    decay_start: f64,
    decay_step: Option<f64>,
    start: f64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::load_with(path, &[], None)
    }

    /// Loads a file, applying `key = value` overrides and an optional seed.
    pub fn load_with(path: &Path, overrides: &[(String, f64)], seed: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read scenario {}: {e}", path.display())))?;
        let mut s = Self::parse_with(&text, overrides, seed)
            .map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message())))?;
        if s.name.is_empty() {
            s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::parse_with(text, &[], None)
    }

    pub fn parse_with(text: &str, overrides: &[(String, f64)], seed: Option<u64>) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::input(format!("invalid TOML: {e}")))?;
        for (key, value) in overrides {
            set_number(&mut doc, key, *value)?;
        }
        if let Some(seed) = seed {
            doc.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        let resolved = toml::to_string(&doc).map_err(|e| CliError::input(e.to_string()))?;
        let hash = hex_prefix(&Sha256::digest(resolved.as_bytes()), 8);
        let file: ScenarioFile = doc
            .try_into()
            .map_err(|e: toml::de::Error| CliError::input(format!("schema: {}", e.message())))?;
        Self::from_file(file, hash)
    }

    fn from_file(f: ScenarioFile, hash: String) -> Result<Self, CliError> {
        let m = &f.membrane;
        let omega_m = hz_to_rad(m.frequency);
        let gamma_m = match (m.linewidth, m.quality_factor) {
            (Some(lw), None) => hz_to_rad(lw),
            (None, Some(q)) => omega_m / q,
            _ => return Err(CliError::input("membrane: give exactly one of `linewidth` and `quality_factor`")),
        };
        let membrane = MembraneParams::new(m.mass, omega_m, gamma_m, m.t_bath)?;
        let detection = DetectionParams::new(f.detection.s_xn)?;
        let feedback = FeedbackParams::velocity(f.feedback.gain_v);
        feedback.validate()?;
        let atoms = match &f.atoms {
            Some(a) => {
                let atoms = AtomCouplingParams {
                    n_atoms: a.n_atoms,
                    mass_atom: a.mass_atom.unwrap_or(MASS_RB87),
                    omega_a: hz_to_rad(a.frequency),
                    gamma_a: hz_to_rad(a.linewidth),
                    reflectivity: a.reflectivity,
                    finesse: a.finesse,
                };
                atoms.validate()?;
                Some(atoms)
            }
            None => None,
        };
        let decay = match &f.decay {
            Some(d) => {
                let n0 = d.n0.or(atoms.map(|a| a.n_atoms)).ok_or_else(|| CliError::input("decay: `n0` needed without [atoms]"))?;
                let model = AtomDecayModel { n0, tau: d.tau };
                model.validate()?;
                if atoms.is_none() {
                    return Err(CliError::input("decay: requires an [atoms] table"));
                }
                Some(model)
            }
            None => None,
        };
        let s = &f.sim;
        let mut sim = SimConfig::new(s.sample_rate, s.duration, f.seed)
            .with_scheme(s.scheme)
            .with_coupling(s.coupling)
            .with_initial(s.initial);
        sim.band_limit = s.band_limit.map(hz_to_rad);
        sim.loop_delay = s.loop_delay;
        sim.atom_temperature = s.atom_temperature;
        sim.validate(&membrane)?;
        // Effective damping may take its rate from explicit stages instead.
        let needs_atoms = match s.coupling {
            CouplingMode::Off => false,
            CouplingMode::EffectiveDamping => f.stages.is_empty(),
            CouplingMode::TwoOscillator => true,
        };
        if needs_atoms && atoms.is_none() {
            return Err(CliError::input("sim.coupling needs an [atoms] table"));
        }
        let stages: Vec<Stage> = f
            .stages
            .iter()
            .map(|st| Stage::new(st.start, st.gain_v, st.gain_s * membrane.gamma_m))
            .collect();
        let annotations = f
            .annotations
            .into_iter()
            .map(|(k, v)| {
                let v = match v {
                    toml::Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, v)
            })
            .collect();
        let scenario = Scenario {
            name: f.name.unwrap_or_default(),
            seed: f.seed,
            membrane,
            detection,
            feedback,
            atoms,
            decay,
            sim,
            analysis: f.analysis,
            annotations,
            hash,
            stages,
            decay_start: f.decay.as_ref().map_or(0.0, |d| d.start),
            decay_step: f.decay.as_ref().and_then(|d| d.step),
            start: s.start,
        };
        scenario.simulation()?.validate()?;
        Ok(scenario)
    }

    /// Γ_sym from the atom table via the sympathetic-rate formula, rad/s.
    /// Zero when coupling is off.
    pub fn gamma_sym(&self) -> Result<f64, CliError> {
        match (self.sim.coupling_mode, &self.atoms) {
            (CouplingMode::Off, _) | (_, None) => Ok(0.0),
            (_, Some(a)) => Ok(sympathetic_rate_for(a, &self.membrane)?),
        }
    }

    /// Gain schedule: explicit `[[stages]]`, else an atom-decay staircase,
    /// else a single stage from `[feedback]` and the atoms.
    pub fn stages(&self) -> Result<Vec<Stage>, CliError> {
        if !self.stages.is_empty() {
            return Ok(self.stages.clone());
        }
        let g_v = self.feedback.gain_v;
        if let (Some(decay), Some(atoms), CouplingMode::EffectiveDamping) = (self.decay, self.atoms, self.sim.coupling_mode) {
            let step = self.decay_step.unwrap_or(decay.tau / 50.0);
            let end = self.start + self.sim.duration;
            let mut out = vec![];
            if self.start < self.decay_start {
                out.push(Stage::new(self.start, g_v, 0.0));
            }
            let t0 = self.decay_start.max(self.start);
            let n = ((end - t0) / step - 1e-9).ceil().max(0.0) as usize;
            for k in 0..n {
                let t = t0 + k as f64 * step;
                // Mid-step atom number keeps the staircase centred on the decay.
                let mid = (t + 0.5 * step - self.decay_start).max(0.0);
                let gs = sympathetic_rate_for(&atoms.with_n_atoms(decay.n_at(mid)), &self.membrane)?;
                out.push(Stage::new(t, g_v, gs));
            }
            return Ok(out);
        }
        if self.sim.coupling_mode == CouplingMode::EffectiveDamping {
            Ok(vec![Stage::new(self.start, g_v, self.gamma_sym()?)])
        } else {
            Ok(vec![Stage::new(self.start, g_v, 0.0)])
        }
    }

    /// Final-stage gains (g_v, g_s); for two-oscillator coupling g_s is the
    /// adiabatic-elimination value.
    pub fn final_gains(&self) -> Result<(f64, f64), CliError> {
        let last = *self.stages()?.last().expect("at least one stage");
        let g_s = match self.sim.coupling_mode {
            CouplingMode::TwoOscillator => self.gamma_sym()? / self.membrane.gamma_m,
            _ => last.gamma_sym / self.membrane.gamma_m,
        };
        Ok((last.gain_v, g_s))
    }

    /// Effective linewidth of the final stage, Hz.
    pub fn final_linewidth_hz(&self) -> Result<f64, CliError> {
        let (g_v, g_s) = self.final_gains()?;
        Ok(rad_to_hz(self.membrane.gamma_m * (1.0 + g_v + g_s)))
    }

    pub fn simulation(&self) -> Result<Simulation, CliError> {
        let mut sim = Simulation::new(self.membrane, self.sim.clone())
            .with_detection(self.detection)
            .with_stages(self.stages()?);
        if let Some(a) = self.atoms {
            if self.sim.coupling_mode == CouplingMode::TwoOscillator {
                sim = sim.with_atoms(a);
            }
        }
        Ok(sim)
    }

    /// Provenance comment lines for CSV headers.
    pub fn provenance(&self) -> Vec<String> {
        vec![provenance_line(&self.name, &self.hash)]
    }
}

pub fn provenance_line(name: &str, hash: &str) -> String {
    format!("optocool {} scenario={} hash={}", env!("CARGO_PKG_VERSION"), name, hash)
}

/// Hex of the first `n` bytes.
pub fn hex_prefix(bytes: &[u8], n: usize) -> String {
    let mut s = String::with_capacity(2 * n);
    for b in bytes.iter().take(n) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Sets a numeric leaf addressed by a dotted key. The parent tables must
/// exist; a present leaf must already be numeric. Whether a new leaf is a
/// known field is left to schema validation.
fn set_number(doc: &mut toml::Table, key: &str, value: f64) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::input(format!("bad key `{key}`")));
    }
    let (leaf, parents) = parts.split_last().expect("non-empty");
    let mut table = doc;
    let mut parts_iter = parents.iter().peekable();
    while let Some(p) = parts_iter.next() {
        let entry = table.get_mut(*p);
        table = match entry {
            Some(toml::Value::Table(t)) => t,
            // Arrays of tables are addressed by index: `stages.1.gain_v`.
            Some(toml::Value::Array(items)) => {
                let idx = parts_iter.next().and_then(|i| i.parse::<usize>().ok());
                match idx.and_then(|i| items.get_mut(i)) {
                    Some(toml::Value::Table(t)) => t,
                    _ => return Err(CliError::input(format!("bad key `{key}`: `{p}` needs a valid index"))),
                }
            }
            _ => return Err(CliError::input(format!("bad key `{key}`: no table `{p}`"))),
        };
    }
    match table.get(*leaf) {
        None | Some(toml::Value::Float(_)) | Some(toml::Value::Integer(_)) => {}
        Some(_) => return Err(CliError::input(format!("bad key `{key}`: not a numeric field"))),
    }
    let v = if *leaf == "seed" || *leaf == "runs" || *leaf == "averages" || *leaf == "stride" {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(CliError::input(format!("`{key}` must be a non-negative integer")));
        }
        toml::Value::Integer(value as i64)
    } else {
        toml::Value::Float(value)
    };
    table.insert(leaf.to_string(), v);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
        seed = 3
        [membrane]
        mass = 76e-12
        frequency = 1000.0
        quality_factor = 1000.0
        t_bath = 0.5
        [sim]
        sample_rate = 50000.0
        duration = 1.0
    "#;

    #[test]
    fn units_are_converted() {
        let s = Scenario::parse(MIN).unwrap();
        assert!((s.membrane.omega_m - 2.0 * std::f64::consts::PI * 1000.0).abs() < 1e-9);
        assert!((s.membrane.quality_factor() - 1000.0).abs() < 1e-9);
        assert_eq!(s.seed, 3);
        assert_eq!(s.stages().unwrap().len(), 1);
    }

    #[test]
    fn overrides_and_hash() {
        let a = Scenario::parse(MIN).unwrap();
        let b = Scenario::parse_with(MIN, &[("feedback.gain_v".into(), 5.0)], None);
        // [feedback] is absent, so the key has no parent table.
        assert!(b.is_err());
        let c = Scenario::parse_with(MIN, &[("membrane.t_bath".into(), 0.25)], Some(9)).unwrap();
        assert_eq!(c.membrane.t_bath, 0.25);
        assert_eq!(c.seed, 9);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.hash, Scenario::parse(MIN).unwrap().hash);
        assert_eq!(a.hash.len(), 16);
    }

    #[test]
    fn bad_keys_are_rejected() {
        for key in ["membrane.nope", "sim.scheme", "membrane..mass", "x.y"] {
            assert!(Scenario::parse_with(MIN, &[(key.into(), 1.0)], None).is_err(), "{key}");
        }
        let extra = MIN.replace("t_bath = 0.5", "t_bath = 0.5\ncolour = 1");
        assert!(Scenario::parse(&extra).is_err());
        let neg = MIN.replace("t_bath = 0.5", "t_bath = -0.5");
        assert!(Scenario::parse(&neg).is_err());
        let both = MIN.replace("quality_factor = 1000.0", "quality_factor = 1000.0\nlinewidth = 1.0");
        assert!(Scenario::parse(&both).is_err());
    }

    #[test]
    fn stage_entries_are_addressed_by_index() {
        let text = format!("{MIN}\n[[stages]]\nstart = 0.0\n\n[[stages]]\nstart = 1.0\ngain_v = 5.0\n");
        let s = Scenario::parse_with(&text, &[("stages.1.gain_v".into(), 40.0)], None).unwrap();
        assert_eq!(s.stages().unwrap()[1].gain_v, 40.0);
        for key in ["stages.2.gain_v", "stages.x.gain_v", "stages.gain_v"] {
            assert!(Scenario::parse_with(&text, &[(key.into(), 1.0)], None).is_err(), "{key}");
        }
    }

    #[test]
    fn decay_staircase_follows_atom_number() {
        let text = format!(
            "{MIN}\ncoupling = \"effective-damping\"\n[atoms]\nn_atoms = 1e6\nfrequency = 1000.0\nlinewidth = 100.0\nreflectivity = 0.42\nfinesse = 160.0\n[decay]\ntau = 0.5\nstep = 0.1\n"
        );
        let s = Scenario::parse(&text).unwrap();
        let st = s.stages().unwrap();
        assert_eq!(st.len(), 10);
        let r = st[1].gamma_sym / st[0].gamma_sym;
        assert!((r - (-0.1f64 / 0.5).exp()).abs() < 1e-12);
    }
}
