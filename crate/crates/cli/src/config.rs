//! Experiment configuration.
//!
//! Configs are TOML. Unknown keys are rejected, and every error names the
//! offending key path. [`Config::to_raw`] gives the canonical form that the
//! manifest stores; feeding it back through [`Config::from_raw`] reproduces
//! the same effective configuration.
//!
//! ```toml
//! methods = ["shifted", "floquet"]
//!
//! [preset]
//! name = "fig2a"
//! ratio = 0.9
//!
//! [grid]
//! start = 0.9
//! stop = 1.1
//! points = 801
//! ```

use optomod_core::hybrid::{thermal_occupation, HybridTrap, REFERENCE_FREQUENCY_HZ};
use optomod_core::spectra::{linear_grid, AutoTruncation, DetectionKind};
use optomod_core::stochastic::{DEFAULT_DT, NOISE_CALIBRATION};
use optomod_core::transfer::DEFAULT_TRUNCATION;
use optomod_core::{
    CouplingSpec, Error, HamiltonianFourierSeries, Method, ModeKind, ModeSpec, ModulationSpec, ModulationTarget,
    NoiseModel, Result, SystemSpec,
};
use serde::{Deserialize, Serialize};

use crate::presets::{PresetName, PresetParams, Provenance, Source};

pub const DEFAULT_GRID: (f64, f64, usize) = (0.5, 1.5, 2048);
pub const DEFAULT_ITERATIVE_ORDER: usize = 3;
pub const DEFAULT_EQUIVALENCE_TOL: f64 = 1e-9;
pub const DEFAULT_PHI_POINTS: usize = 65;
pub const DEFAULT_SEGMENT_LEN: usize = 1 << 17;
/// Each member records this many segment lengths (25 half-overlapping segments).
pub const DEFAULT_SEGMENTS_PER_MEMBER: f64 = 13.0;
pub const DEFAULT_ENSEMBLE: usize = 8;
pub const DEFAULT_BURN_IN: f64 = 4000.0;
pub const GOLDEN_TOL: f64 = 0.01;

// ---------------------------------------------------------------------------
// Raw (as written) form

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<RawPreset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<RawUnits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<RawMode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<RawCoupling>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modulations: Option<Vec<RawModulation>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drive_frequency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<RawDetection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<RawGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<RawTruncation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<RawTolerances>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulator: Option<RawSimulator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawPreset {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cooperativity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_kappa: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawUnits {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMode {
    pub name: String,
    pub kind: String,
    pub frequency: f64,
    pub damping: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoupling {
    pub first: String,
    pub second: String,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModulation {
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<usize>,
    pub harmonic: i32,
    pub waveform: String,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawDetection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawGrid {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawK {
    Fixed(usize),
    Named(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawTruncation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<RawK>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterative_order: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawTolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawSweep {
    pub axes: Vec<RawAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimize: Option<RawMinimize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawMinimize {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawSimulator {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_sim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_trajectory: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

// ---------------------------------------------------------------------------
// Effective form

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Waveform {
    Cosine,
    Sine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Modulation {
    pub target: ModulationTarget,
    pub harmonic: i32,
    pub waveform: Waveform,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CustomModel {
    pub modes: Vec<ModeSpec>,
    pub couplings: Vec<CouplingSpec>,
    pub modulations: Vec<Modulation>,
    pub drive_frequency: f64,
}

impl CustomModel {
    pub fn system(&self) -> SystemSpec {
        let modulations = self
            .modulations
            .iter()
            .map(|m| match m.waveform {
                Waveform::Cosine => ModulationSpec::cosine(m.target.clone(), m.harmonic, m.amplitude),
                Waveform::Sine => ModulationSpec::sine(m.target.clone(), m.harmonic, m.amplitude),
            })
            .collect();
        SystemSpec {
            modes: self.modes.clone(),
            couplings: self.couplings.clone(),
            modulations,
            drive_frequency: self.drive_frequency,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Preset(PresetParams),
    Custom(CustomModel),
}

impl Model {
    pub fn system(&self) -> SystemSpec {
        match self {
            Model::Preset(p) => p.system(),
            Model::Custom(c) => c.system(),
        }
    }

    pub fn hybrid(&self) -> Option<HybridTrap> {
        match self {
            Model::Preset(p) => p.hybrid(),
            Model::Custom(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub kind: DetectionKind,
    pub mode: usize,
    pub phi: f64,
    pub beat: f64,
    pub phi_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn omega(&self) -> Vec<f64> {
        linear_grid(self.start, self.stop, self.points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truncation {
    pub k: KChoice,
    pub auto: AutoTruncation,
    pub iterative_order: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimize {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub axes: Vec<Axis>,
    pub minimize: Option<Minimize>,
}

impl Sweep {
    /// Cartesian product of the axes, first axis outermost.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![vec![]];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.parameter.clone(), v));
                        q
                    })
                })
                .collect();
        }
        if self.axes.is_empty() {
            out.clear();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulator {
    pub dt: f64,
    pub t_sim: f64,
    pub burn_in: f64,
    pub ensemble: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub segment_len: usize,
    pub band: (f64, f64),
    pub dump_trajectory: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub dir: String,
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub model: Model,
    pub reference_hz: f64,
    pub methods: Vec<Method>,
    pub detection: Detection,
    pub grid: GridSpec,
    pub truncation: Truncation,
    pub equivalence_tol: f64,
    pub sweep: Option<Sweep>,
    pub simulator: Simulator,
    pub output: Output,
}

/// Compiled model ready for the solvers.
pub struct Built {
    pub spec: SystemSpec,
    pub series: HamiltonianFourierSeries,
    pub noise: NoiseModel,
    pub hybrid: Option<HybridTrap>,
}

// ---------------------------------------------------------------------------
// Parsing

pub fn parse_method(s: &str, path: &str) -> Result<Method> {
    match s {
        "shifted" => Ok(Method::Shifted),
        "floquet" => Ok(Method::Floquet),
        "iterative" => Ok(Method::Iterative),
        "oracle" => Ok(Method::Oracle),
        "stochastic" => Err(Error::validation(path, "the stochastic method runs through the `simulate` command")),
        other => {
            Err(Error::validation(path, format!("unknown method `{other}` (shifted, floquet, iterative, oracle)")))
        }
    }
}

fn detection_name(kind: DetectionKind) -> &'static str {
    match kind {
        DetectionKind::Intracavity => "intracavity",
        DetectionKind::OutputHomodyne => "homodyne",
        DetectionKind::OutputHeterodyne => "heterodyne",
    }
}

/// Deserialises `value` into `T`, reporting failures with the key path.
fn deserialize_at<'de, T: Deserialize<'de>, D: serde::Deserializer<'de>>(d: D) -> Result<T>
where
    D::Error: std::fmt::Display,
{
    serde_path_to_error::deserialize(d).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        let message = message.lines().next().unwrap_or_default().to_string();
        Error::validation(if path == "." { "<root>".to_string() } else { path }, message)
    })
}

pub fn parse_toml_value(text: &str) -> Result<toml::Value> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::validation("<syntax>", e.message()))?;
    Ok(toml::Value::Table(table))
}

pub fn raw_from_toml(value: toml::Value) -> Result<RawConfig> {
    deserialize_at(value)
}

pub fn raw_from_json(value: serde_json::Value) -> Result<RawConfig> {
    deserialize_at(value)
}

/// Parses TOML text into a validated configuration and the provenance of
/// every value that was filled in or taken from a preset.
pub fn parse_config(text: &str) -> Result<(Config, Vec<Provenance>)> {
    Config::from_raw(raw_from_toml(parse_toml_value(text)?)?)
}

/// Sets `path` (dot separated; array elements by index or by `name`) in a
/// TOML tree, creating intermediate tables.
pub fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::validation(path, "empty path segment"));
    }
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(items) => {
                let idx = match seg.parse::<usize>() {
                    Ok(i) => i,
                    Err(_) => items
                        .iter()
                        .position(|v| v.get("name").and_then(|n| n.as_str()) == Some(seg))
                        .ok_or_else(|| Error::validation(path, format!("no element named `{seg}`")))?,
                };
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::validation(path, format!("index {idx} out of range ({len} elements)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::validation(path, format!("`{seg}` is not inside a table or array"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Parses a flag value as a TOML literal, falling back to a bare string.
pub fn parse_literal(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

struct Filler {
    provenance: Vec<Provenance>,
}

impl Filler {
    fn take<T: ToString + Clone>(&mut self, path: &str, given: Option<T>, default: T, note: &'static str) -> T {
        let (value, source) = match given {
            Some(v) => (v, Source::User),
            None => (default, Source::Decision),
        };
        if source != Source::User {
            self.provenance.push(Provenance { path: path.to_string(), value: value.to_string(), source, note });
        }
        value
    }
}

fn finite(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(path, "must be finite"))
    }
}

fn resolve_preset(raw: &RawPreset, fill: &mut Filler) -> Result<PresetParams> {
    let name = PresetName::parse(&raw.name)?;
    let (mut p, defaults) = PresetParams::defaults(name);
    let given: [(&str, Option<f64>); 14] = [
        ("ratio", raw.ratio),
        ("g_bar", raw.g_bar),
        ("static_g", raw.static_g),
        ("omega_m", raw.omega_m),
        ("omega_d", raw.omega_d),
        ("detuning", raw.detuning),
        ("detuning2", raw.detuning2),
        ("kappa", raw.kappa),
        ("gamma_m", raw.gamma_m),
        ("n_a", raw.n_a),
        ("n_b", raw.n_b),
        ("probe_ratio", raw.probe_ratio),
        ("probe_detuning", raw.probe_detuning),
        ("probe_kappa", raw.probe_kappa),
    ];
    for (key, value) in given {
        match value {
            Some(v) => p.set(key, v)?,
            None => {
                if let Some(d) = defaults.iter().find(|d| d.path == format!("preset.{key}")) {
                    fill.provenance.push(d.clone());
                }
            }
        }
    }
    if let Some(c) = raw.cooperativity {
        p.set("cooperativity", c)?;
        fill.provenance.push(Provenance {
            path: "preset.g_bar".into(),
            value: p.g_bar.to_string(),
            source: Source::Derived,
            note: "from the requested cooperativity 4 g^2 / (kappa Gamma_M)",
        });
    } else if name == PresetName::Fig2c && raw.g_bar.is_none() {
        return Err(Error::validation("preset.cooperativity", "the fig2c preset is addressed by its cooperativity"));
    }
    p.validate()?;
    Ok(p)
}

fn resolve_custom(raw: &RawConfig, reference_hz: f64, fill: &mut Filler) -> Result<CustomModel> {
    let raw_modes = raw.modes.as_deref().unwrap_or_default();
    if raw_modes.is_empty() {
        return Err(Error::validation("modes", "either `preset` or at least one mode is required"));
    }
    let mut modes = Vec::with_capacity(raw_modes.len());
    for (i, m) in raw_modes.iter().enumerate() {
        let at = |f: &str| format!("modes[{i}].{f}");
        if raw_modes[..i].iter().any(|o| o.name == m.name) {
            return Err(Error::validation(at("name"), format!("duplicate mode name `{}`", m.name)));
        }
        let kind = match m.kind.as_str() {
            "optical" => ModeKind::Optical,
            "mechanical" => ModeKind::Mechanical,
            other => {
                return Err(Error::validation(at("kind"), format!("unknown kind `{other}` (optical, mechanical)")))
            }
        };
        finite(&at("frequency"), m.frequency)?;
        if !(m.damping.is_finite() && m.damping > 0.0) {
            return Err(Error::validation(at("damping"), "must be finite and > 0"));
        }
        let occupation = match (m.occupation, m.temperature_k) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(at("temperature_k"), "give either `occupation` or `temperature_k`"))
            }
            (Some(n), None) => n,
            (None, Some(t)) => {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::validation(at("temperature_k"), "must be finite and >= 0"));
                }
                if kind == ModeKind::Optical {
                    return Err(Error::validation(
                        at("temperature_k"),
                        "optical modes take an occupation; their detuning is not the carrier frequency",
                    ));
                }
                let n = thermal_occupation(t, m.frequency.abs() * reference_hz);
                fill.provenance.push(Provenance {
                    path: at("occupation"),
                    value: n.to_string(),
                    source: Source::Derived,
                    note: "Bose occupation from temperature_k and units.reference_hz",
                });
                n
            }
            (None, None) => fill.take(&at("occupation"), None, 0.0, "zero-temperature bath"),
        };
        if !(occupation.is_finite() && occupation >= 0.0) {
            return Err(Error::validation(at("occupation"), "must be finite and >= 0"));
        }
        modes.push(ModeSpec { name: m.name.clone(), kind, frequency: m.frequency, damping: m.damping, occupation });
    }
    let lookup = |path: String, name: &str| {
        modes
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::validation(path, format!("unknown mode `{name}`")))
    };
    let mut couplings = Vec::new();
    for (i, c) in raw.couplings.as_deref().unwrap_or_default().iter().enumerate() {
        let first = lookup(format!("couplings[{i}].first"), &c.first)?;
        let second = lookup(format!("couplings[{i}].second"), &c.second)?;
        if first == second {
            return Err(Error::validation(format!("couplings[{i}].second"), "a mode cannot couple to itself"));
        }
        couplings.push(CouplingSpec { first, second, g: finite(&format!("couplings[{i}].g"), c.g)? });
    }
    let mut modulations = Vec::new();
    for (i, m) in raw.modulations.as_deref().unwrap_or_default().iter().enumerate() {
        let at = |f: &str| format!("modulations[{i}].{f}");
        let target = match m.target.as_str() {
            "frequency" => {
                let name = m
                    .mode
                    .as_deref()
                    .ok_or_else(|| Error::validation(at("mode"), "required for a frequency target"))?;
                ModulationTarget::Frequency(lookup(at("mode"), name)?)
            }
            "coupling" => {
                let idx =
                    m.coupling.ok_or_else(|| Error::validation(at("coupling"), "required for a coupling target"))?;
                if idx >= couplings.len() {
                    return Err(Error::validation(
                        at("coupling"),
                        format!("only {} couplings are declared", couplings.len()),
                    ));
                }
                ModulationTarget::Coupling(idx)
            }
            other => {
                return Err(Error::validation(at("target"), format!("unknown target `{other}` (frequency, coupling)")))
            }
        };
        if m.harmonic <= 0 {
            return Err(Error::validation(at("harmonic"), "must be >= 1"));
        }
        let waveform = match m.waveform.as_str() {
            "cosine" => Waveform::Cosine,
            "sine" => Waveform::Sine,
            other => {
                return Err(Error::validation(at("waveform"), format!("unknown waveform `{other}` (cosine, sine)")))
            }
        };
        modulations.push(Modulation {
            target,
            harmonic: m.harmonic,
            waveform,
            amplitude: finite(&at("amplitude"), m.amplitude)?,
        });
    }
    let drive_frequency = match raw.drive_frequency {
        Some(w) => w,
        None if modulations.is_empty() => fill.take("drive_frequency", None, 0.0, "unmodulated model"),
        None => return Err(Error::validation("drive_frequency", "required when modulations are present")),
    };
    if !(drive_frequency.is_finite() && drive_frequency >= 0.0) || (!modulations.is_empty() && drive_frequency == 0.0) {
        return Err(Error::validation("drive_frequency", "must be finite and > 0 for a modulated model"));
    }
    Ok(CustomModel { modes, couplings, modulations, drive_frequency })
}

impl Config {
    pub fn from_raw(raw: RawConfig) -> Result<(Config, Vec<Provenance>)> {
        let mut fill = Filler { provenance: Vec::new() };
        let units = raw.units.clone().unwrap_or_default();
        let reference_hz =
            fill.take("units.reference_hz", units.reference_hz, REFERENCE_FREQUENCY_HZ, "mechanical frequency 925 kHz");
        if !(reference_hz.is_finite() && reference_hz > 0.0) {
            return Err(Error::validation("units.reference_hz", "must be finite and > 0"));
        }

        let model = match &raw.preset {
            Some(p) => {
                for (key, present) in [
                    ("modes", raw.modes.is_some()),
                    ("couplings", raw.couplings.is_some()),
                    ("modulations", raw.modulations.is_some()),
                    ("drive_frequency", raw.drive_frequency.is_some()),
                ] {
                    if present {
                        return Err(Error::validation(
                            key,
                            "cannot be combined with a preset; override preset.* instead",
                        ));
                    }
                }
                Model::Preset(resolve_preset(p, &mut fill)?)
            }
            None => Model::Custom(resolve_custom(&raw, reference_hz, &mut fill)?),
        };
        let spec = model.system();
        let series = spec.fourier_series()?;

        let methods = match &raw.methods {
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::validation("methods", "at least one method is required"));
                }
                let mut out = Vec::new();
                for (i, m) in list.iter().enumerate() {
                    let method = parse_method(m, &format!("methods[{i}]"))?;
                    if out.contains(&method) {
                        return Err(Error::validation(format!("methods[{i}]"), format!("`{m}` listed twice")));
                    }
                    out.push(method);
                }
                out
            }
            None => {
                fill.take("methods", None, "[\"shifted\"]".to_string(), "default solver");
                vec![Method::Shifted]
            }
        };
        if methods.contains(&Method::Iterative) && model.hybrid().is_none() {
            return Err(Error::validation("methods", "the iterative method needs the fig2a or fig2c preset"));
        }

        let det = raw.detection.clone().unwrap_or_default();
        let kind = match fill
            .take("detection.kind", det.kind.clone(), "intracavity".into(), "intracavity spectrum")
            .as_str()
        {
            "intracavity" => DetectionKind::Intracavity,
            "homodyne" => DetectionKind::OutputHomodyne,
            "heterodyne" => DetectionKind::OutputHeterodyne,
            other => {
                return Err(Error::validation(
                    "detection.kind",
                    format!("unknown kind `{other}` (intracavity, homodyne, heterodyne)"),
                ))
            }
        };
        let default_mode = match &model {
            Model::Preset(p) => p.detected_mode(),
            Model::Custom(_) => 0,
        };
        let mode_name =
            fill.take("detection.mode", det.mode.clone(), spec.modes[default_mode].name.clone(), "first cavity");
        let mode = spec
            .mode_index(&mode_name)
            .ok_or_else(|| Error::validation("detection.mode", format!("unknown mode `{mode_name}`")))?;
        if kind != DetectionKind::Intracavity && spec.modes[mode].kind != ModeKind::Optical {
            return Err(Error::validation("detection.mode", "output detection needs an optical mode"));
        }
        let phi = finite("detection.phi", fill.take("detection.phi", det.phi, 0.0, "amplitude quadrature"))?;
        let beat = finite(
            "detection.beat",
            fill.take("detection.beat", det.beat, series.drive_frequency, "beat at the drive frequency (n = 2)"),
        )?;
        let phi_points =
            fill.take("detection.phi_points", det.phi_points, DEFAULT_PHI_POINTS, "phase samples over [0, pi]");
        if phi_points < 2 {
            return Err(Error::validation("detection.phi_points", "must be >= 2"));
        }
        let detection = Detection { kind, mode, phi, beat, phi_points };

        let g = raw.grid.clone().unwrap_or_default();
        let grid = GridSpec {
            start: finite("grid.start", fill.take("grid.start", g.start, DEFAULT_GRID.0, "default window"))?,
            stop: finite("grid.stop", fill.take("grid.stop", g.stop, DEFAULT_GRID.1, "default window"))?,
            points: fill.take("grid.points", g.points, DEFAULT_GRID.2, "default resolution"),
        };
        if grid.points < 2 {
            return Err(Error::validation("grid.points", "must be >= 2"));
        }
        if !(grid.stop > grid.start) {
            return Err(Error::validation("grid.stop", "must exceed grid.start"));
        }

        let t = raw.truncation.clone().unwrap_or_default();
        let k = match t.k.clone() {
            Some(RawK::Fixed(k)) => KChoice::Fixed(k),
            Some(RawK::Named(s)) if s == "auto" => KChoice::Auto,
            Some(RawK::Named(s)) => {
                return Err(Error::validation("truncation.k", format!("expected an integer or \"auto\", got `{s}`")))
            }
            None => KChoice::Fixed(fill.take("truncation.k", None, DEFAULT_TRUNCATION, "default truncation")),
        };
        if let KChoice::Fixed(k) = k {
            if k < series.max_harmonic().max(1) {
                return Err(Error::validation(
                    "truncation.k",
                    format!("must be >= {} (highest modulation harmonic)", series.max_harmonic().max(1)),
                ));
            }
        }
        let d = AutoTruncation::default();
        let auto = AutoTruncation {
            start: fill.take("truncation.start", t.start, d.start, "first K of the doubling sequence"),
            tol: fill.take("truncation.tol", t.tol, d.tol, "relative change accepted as converged"),
            max: fill.take("truncation.max", t.max, d.max, "largest K tried"),
        };
        if auto.start == 0 || auto.max < auto.start {
            return Err(Error::validation("truncation.max", "need 1 <= start <= max"));
        }
        if !(auto.tol.is_finite() && auto.tol > 0.0) {
            return Err(Error::validation("truncation.tol", "must be finite and > 0"));
        }
        let iterative_order = fill.take(
            "truncation.iterative_order",
            t.iterative_order,
            DEFAULT_ITERATIVE_ORDER,
            "third-order substitution",
        );
        if iterative_order == 0 {
            return Err(Error::validation("truncation.iterative_order", "must be >= 1"));
        }
        let truncation = Truncation { k, auto, iterative_order };

        let tol = raw.tolerances.clone().unwrap_or_default();
        let equivalence_tol =
            fill.take("tolerances.equivalence", tol.equivalence, DEFAULT_EQUIVALENCE_TOL, "shifted vs floquet");
        if !(equivalence_tol.is_finite() && equivalence_tol > 0.0) {
            return Err(Error::validation("tolerances.equivalence", "must be finite and > 0"));
        }

        let sweep = match &raw.sweep {
            None => None,
            Some(s) => Some(resolve_sweep(s, &raw, &mut fill)?),
        };

        let s = raw.simulator.clone().unwrap_or_default();
        let dt = fill.take("simulator.dt", s.dt, DEFAULT_DT, "omega_M dt = 0.02");
        let segment_len =
            fill.take("simulator.segment_len", s.segment_len, DEFAULT_SEGMENT_LEN, "Welch segment length");
        let band = s.band.map(|b| (b[0], b[1]));
        let simulator = Simulator {
            dt,
            t_sim: fill.take(
                "simulator.t_sim",
                s.t_sim,
                dt * segment_len as f64 * DEFAULT_SEGMENTS_PER_MEMBER,
                "25 half-overlapping segments per member",
            ),
            burn_in: fill.take("simulator.burn_in", s.burn_in, DEFAULT_BURN_IN, "several cooled mechanical lifetimes"),
            ensemble: fill.take("simulator.ensemble", s.ensemble, DEFAULT_ENSEMBLE, "200 segments in total"),
            seed: fill.take("simulator.seed", s.seed, 0, "fixed seed"),
            noise_scale: fill.take(
                "simulator.noise_scale",
                s.noise_scale,
                NOISE_CALIBRATION,
                "calibrated noise strength",
            ),
            segment_len,
            band: match band {
                Some(b) => b,
                None => {
                    fill.take(
                        "simulator.band",
                        None,
                        format!("[{}, {}]", grid.start, grid.stop),
                        "the spectral grid window",
                    );
                    (grid.start, grid.stop)
                }
            },
            dump_trajectory: fill.take("simulator.dump_trajectory", s.dump_trajectory, false, "no trajectory file"),
        };
        if !(simulator.band.0.is_finite() && simulator.band.1 > simulator.band.0) {
            return Err(Error::validation("simulator.band", "must be an increasing pair"));
        }
        if simulator.segment_len < 16 {
            return Err(Error::validation("simulator.segment_len", "must be >= 16"));
        }

        let o = raw.output.clone().unwrap_or_default();
        let output = Output {
            dir: fill.take("output.dir", o.dir, "out".to_string(), "relative output directory"),
            prefix: fill.take("output.prefix", o.prefix, "run".to_string(), "file name prefix"),
        };
        if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
            return Err(Error::validation("output.prefix", "must be a non-empty file name"));
        }

        let config = Config {
            model,
            reference_hz,
            methods,
            detection,
            grid,
            truncation,
            equivalence_tol,
            sweep,
            simulator,
            output,
        };
        config.build()?;
        Ok((config, fill.provenance))
    }

    pub fn build(&self) -> Result<Built> {
        let spec = self.model.system();
        let series = spec.fourier_series()?;
        let noise = spec.noise()?;
        Ok(Built { hybrid: self.model.hybrid(), spec, series, noise })
    }

    /// Canonical raw form: every effective value written out explicitly.
    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig::default();
        match &self.model {
            Model::Preset(p) => {
                let probe = p.probe;
                raw.preset = Some(RawPreset {
                    name: p.name.as_str().to_string(),
                    ratio: Some(p.ratio),
                    g_bar: Some(p.g_bar),
                    cooperativity: None,
                    static_g: Some(p.static_g),
                    omega_m: Some(p.omega_m),
                    omega_d: Some(p.omega_d),
                    detuning: Some(p.detuning),
                    detuning2: Some(p.detuning2),
                    kappa: Some(p.kappa),
                    gamma_m: Some(p.gamma_m),
                    n_a: Some(p.n_a),
                    n_b: Some(p.n_b),
                    probe_ratio: probe.map(|q| q.ratio),
                    probe_detuning: probe.map(|q| q.detuning),
                    probe_kappa: probe.map(|q| q.kappa),
                });
            }
            Model::Custom(c) => {
                raw.modes = Some(
                    c.modes
                        .iter()
                        .map(|m| RawMode {
                            name: m.name.clone(),
                            kind: match m.kind {
                                ModeKind::Optical => "optical".into(),
                                ModeKind::Mechanical => "mechanical".into(),
                            },
                            frequency: m.frequency,
                            damping: m.damping,
                            occupation: Some(m.occupation),
                            temperature_k: None,
                        })
                        .collect(),
                );
                raw.couplings = Some(
                    c.couplings
                        .iter()
                        .map(|k| RawCoupling {
                            first: c.modes[k.first].name.clone(),
                            second: c.modes[k.second].name.clone(),
                            g: k.g,
                        })
                        .collect(),
                );
                raw.modulations = Some(
                    c.modulations
                        .iter()
                        .map(|m| {
                            let (target, mode, coupling) = match m.target {
                                ModulationTarget::Frequency(i) => ("frequency", Some(c.modes[i].name.clone()), None),
                                ModulationTarget::Coupling(i) => ("coupling", None, Some(i)),
                            };
                            RawModulation {
                                target: target.into(),
                                mode,
                                coupling,
                                harmonic: m.harmonic,
                                waveform: match m.waveform {
                                    Waveform::Cosine => "cosine".into(),
                                    Waveform::Sine => "sine".into(),
                                },
                                amplitude: m.amplitude,
                            }
                        })
                        .collect(),
                );
                raw.drive_frequency = Some(c.drive_frequency);
            }
        }
        raw.units = Some(RawUnits { reference_hz: Some(self.reference_hz) });
        raw.methods = Some(self.methods.iter().map(|m| m.name().to_string()).collect());
        let spec = self.model.system();
        raw.detection = Some(RawDetection {
            kind: Some(detection_name(self.detection.kind).into()),
            mode: Some(spec.modes[self.detection.mode].name.clone()),
            phi: Some(self.detection.phi),
            beat: Some(self.detection.beat),
            phi_points: Some(self.detection.phi_points),
        });
        raw.grid =
            Some(RawGrid { start: Some(self.grid.start), stop: Some(self.grid.stop), points: Some(self.grid.points) });
        raw.truncation = Some(RawTruncation {
            k: Some(match self.truncation.k {
                KChoice::Fixed(k) => RawK::Fixed(k),
                KChoice::Auto => RawK::Named("auto".into()),
            }),
            start: Some(self.truncation.auto.start),
            tol: Some(self.truncation.auto.tol),
            max: Some(self.truncation.auto.max),
            iterative_order: Some(self.truncation.iterative_order),
        });
        raw.tolerances = Some(RawTolerances { equivalence: Some(self.equivalence_tol) });
        raw.sweep = self.sweep.as_ref().map(|s| RawSweep {
            axes: s.axes.iter().map(|a| RawAxis { parameter: a.parameter.clone(), values: a.values.clone() }).collect(),
            minimize: s.minimize.as_ref().map(|m| RawMinimize {
                parameter: Some(m.parameter.clone()),
                lo: Some(m.lo),
                hi: Some(m.hi),
                tol: Some(m.tol),
            }),
        });
        let s = &self.simulator;
        raw.simulator = Some(RawSimulator {
            dt: Some(s.dt),
            t_sim: Some(s.t_sim),
            burn_in: Some(s.burn_in),
            ensemble: Some(s.ensemble),
            seed: Some(s.seed),
            noise_scale: Some(s.noise_scale),
            segment_len: Some(s.segment_len),
            band: Some([s.band.0, s.band.1]),
            dump_trajectory: Some(s.dump_trajectory),
        });
        raw.output = Some(RawOutput { dir: Some(self.output.dir.clone()), prefix: Some(self.output.prefix.clone()) });
        raw
    }

    pub fn to_toml_value(&self) -> toml::Value {
        toml::Value::try_from(self.to_raw()).expect("canonical config is representable in TOML")
    }

    /// Copy of this configuration with `parameter` set to `value`, revalidated.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<Config> {
        let mut tree = self.to_toml_value();
        set_path(&mut tree, parameter, toml::Value::Float(value))?;
        let mut raw = raw_from_toml(tree)?;
        raw.sweep = None;
        let (mut cfg, _) = Config::from_raw(raw)?;
        cfg.sweep = self.sweep.clone();
        Ok(cfg)
    }
}

fn resolve_sweep(s: &RawSweep, raw: &RawConfig, fill: &mut Filler) -> Result<Sweep> {
    let mut axes = Vec::new();
    let probe_raw = RawConfig { sweep: None, ..raw.clone() };
    for (i, a) in s.axes.iter().enumerate() {
        let at = |f: &str| format!("sweep.axes[{i}].{f}");
        if a.values.is_empty() {
            return Err(Error::validation(at("values"), "at least one value is required"));
        }
        if let Some(j) = a.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("sweep.axes[{i}].values[{j}]"), "must be finite"));
        }
        check_parameter(&probe_raw, &a.parameter, a.values[0]).map_err(|e| requalify(e, &at("parameter")))?;
        axes.push(Axis { parameter: a.parameter.clone(), values: a.values.clone() });
    }
    let minimize = match &s.minimize {
        None => None,
        Some(m) => {
            let default_parameter = axes.first().map(|a| a.parameter.clone()).unwrap_or_else(|| "preset.ratio".into());
            let parameter =
                fill.take("sweep.minimize.parameter", m.parameter.clone(), default_parameter, "first sweep axis");
            let lo = fill.take("sweep.minimize.lo", m.lo, 1.0, "suppression-point bracket");
            let hi = fill.take("sweep.minimize.hi", m.hi, 2.0, "suppression-point bracket");
            let tol = fill.take("sweep.minimize.tol", m.tol, GOLDEN_TOL, "golden-section tolerance");
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::validation("sweep.minimize.hi", "need finite lo < hi"));
            }
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::validation("sweep.minimize.tol", "must be finite and > 0"));
            }
            check_parameter(&probe_raw, &parameter, lo).map_err(|e| requalify(e, "sweep.minimize.parameter"))?;
            Some(Minimize { parameter, lo, hi, tol })
        }
    };
    if axes.is_empty() && minimize.is_none() {
        return Err(Error::validation("sweep.axes", "a sweep needs at least one axis or a minimize block"));
    }
    Ok(Sweep { axes, minimize })
}

fn check_parameter(raw: &RawConfig, parameter: &str, value: f64) -> Result<()> {
    let mut tree = toml::Value::try_from(raw).map_err(|e| Error::validation("<root>", e.to_string()))?;
    set_path(&mut tree, parameter, toml::Value::Float(value))?;
    raw_from_toml(tree).map(|_| ())
}

fn requalify(e: Error, path: &str) -> Error {
    match e {
        Error::Validation { field, message } => Error::validation(path, format!("`{field}`: {message}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        parse_config(text).map(|(c, _)| c)
    }

    const TWO_MODES: &str = r#"
[[modes]]
name = "cavity"
kind = "optical"
frequency = -1.0
damping = 1.0

[[modes]]
name = "mechanics"
kind = "mechanical"
frequency = 1.0
damping = 1e-3
occupation = 10.0

[[couplings]]
first = "cavity"
second = "mechanics"
g = 0.05
"#;

    #[test]
    fn minimal_config_gets_the_documented_defaults() {
        let (c, prov) = parse_config(TWO_MODES).unwrap();
        assert_eq!(c.truncation.k, KChoice::Fixed(8));
        assert_eq!(c.grid, GridSpec { start: 0.5, stop: 1.5, points: 2048 });
        assert_eq!(c.methods, vec![Method::Shifted]);
        for path in ["truncation.k", "grid.points", "modes[0].occupation", "simulator.seed"] {
            assert!(prov.iter().any(|p| p.path == path), "{path} missing from provenance");
        }
    }

    #[test]
    fn fig2a_preset_expands_fully() {
        let c = parse("[preset]\nname = \"fig2a\"\nratio = 0.9\n").unwrap();
        let Model::Preset(p) = &c.model else { panic!("preset expected") };
        assert_eq!(p.trap(), HybridTrap::fig2a(0.9));
        assert_eq!(c.detection.mode, 0);
    }

    #[test]
    fn negative_occupation_names_the_field() {
        let err = parse("[preset]\nname = \"fig2a\"\nn_b = -1.0\n").unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field == "preset.n_b"), "{err}");
        let err = parse(&TWO_MODES.replace("occupation = 10.0", "occupation = -2.0")).unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field == "modes[1].occupation"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = parse("[grid]\npoints = 10\nstep = 0.1\n").unwrap_err();
        assert!(
            matches!(&err, Error::Validation { field, message } if field == "grid.step" && message.contains("step")),
            "{err}"
        );
        let err = parse("[preset]\nname = \"fig2a\"\nratoi = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("ratoi"), "{err}");
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(parse(&format!("methods = []\n{TWO_MODES}")).is_err());
        let err = parse(&format!("{TWO_MODES}\n[grid]\nstart = 1.0\nstop = 0.5\n")).unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field == "grid.stop"));
        let err =
            parse(&format!("{TWO_MODES}\n[[sweep.axes]]\nparameter = \"drive_frequency\"\nvalues = [1.0, nan]\n"))
                .unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field == "sweep.axes[0].values[1]"), "{err}");
        let err = parse(&format!("methods = [\"iterative\"]\n{TWO_MODES}")).unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field == "methods"));
        let err =
            parse("[preset]\nname = \"fig2a\"\n[[modes]]\nname=\"a\"\nkind=\"optical\"\nfrequency=0.0\ndamping=1.0\n")
                .unwrap_err();
        assert!(matches!(&err, Error::Validation { field, .. } if field == "modes"));
    }

    #[test]
    fn canonical_form_round_trips_through_json_and_toml() {
        let texts = [
            TWO_MODES.to_string(),
            "[preset]\nname = \"fig2c\"\ncooperativity = 50.0\nratio = 0.5\n[truncation]\nk = \"auto\"\n".to_string(),
            "[preset]\nname = \"fig3\"\n[detection]\nkind = \"homodyne\"\n[[sweep.axes]]\nparameter = \"preset.ratio\"\nvalues = [0.0, 1.4]\n"
                .to_string(),
            format!(
                "drive_frequency = 0.05\n{TWO_MODES}\n[[modulations]]\ntarget = \"coupling\"\ncoupling = 0\nharmonic = 1\nwaveform = \"sine\"\namplitude = 0.01\n"
            ),
        ];
        for text in texts {
            let c = parse(&text).unwrap();
            let json = serde_json::to_value(c.to_raw()).unwrap();
            let back = Config::from_raw(raw_from_json(json).unwrap()).unwrap().0;
            assert_eq!(back, c);
            let toml_text = toml::to_string(&c.to_raw()).unwrap();
            assert_eq!(parse(&toml_text).unwrap(), c);
        }
    }

    #[test]
    fn parameters_can_be_set_by_path() {
        let c = parse("[preset]\nname = \"fig2a\"\n").unwrap();
        let d = c.with_parameter("preset.ratio", 1.4).unwrap();
        assert_eq!(d.model.hybrid().unwrap().ratio(), 1.4 * 0.05 / 0.05);
        let e = c.with_parameter("preset.cooperativity", 100.0).unwrap();
        assert!((e.model.hybrid().unwrap().cooperativity() - 100.0).abs() < 1e-9);
        let f = parse(TWO_MODES).unwrap().with_parameter("modes.mechanics.occupation", 3.0).unwrap();
        let Model::Custom(m) = &f.model else { panic!() };
        assert_eq!(m.modes[1].occupation, 3.0);
        assert!(c.with_parameter("preset.nope", 1.0).is_err());
    }

    #[test]
    fn literals_parse_like_toml() {
        assert_eq!(parse_literal("3"), toml::Value::Integer(3));
        assert_eq!(parse_literal("0.5"), toml::Value::Float(0.5));
        assert_eq!(parse_literal("auto"), toml::Value::String("auto".into()));
        assert_eq!(parse_literal("[\"shifted\", \"floquet\"]").as_array().unwrap().len(), 2);
    }

    #[test]
    fn temperatures_convert_through_the_reference_frequency() {
        let text = TWO_MODES.replace("occupation = 10.0", "temperature_k = 300.0");
        let c = parse(&text).unwrap();
        let Model::Custom(m) = &c.model else { panic!() };
        assert!((m.modes[1].occupation - 6.7578e6).abs() / 6.7578e6 < 1e-3);
    }
}
