//! Canonical parameter sets.
//!
//! `fig2a` is the split-sideband hybrid trap, `fig2c` the same trap addressed
//! through its cooperativity, and `fig3` adds a resonant probe cavity that is
//! read out by homodyne detection. Every value carries a provenance tag: values
//! quoted with the figures are `paper`, values we had to choose are `decision`.

use optomod_core::hybrid::{thermal_occupation, HybridTrap, REFERENCE_FREQUENCY_HZ, ROOM_TEMPERATURE_K};
use optomod_core::{CouplingSpec, Error, ModeSpec, ModulationSpec, ModulationTarget, Result, SystemSpec};
use serde::{Deserialize, Serialize};

/// ω_2/ω_d values of the Fig. 2 panels.
pub const FIG2_RATIOS: [f64; 5] = [0.05, 0.2, 0.5, 0.9, 1.4];

/// Probe coupling relative to the cooling coupling in `fig3`.
pub const FIG3_PROBE_RATIO: f64 = 1.0;

/// Mechanical bath occupation in `fig3` (the cooled regime, n̄_b ≲ 1).
pub const FIG3_MECHANICAL_OCCUPATION: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Fig2a,
    Fig2c,
    Fig3,
}

impl PresetName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fig2a" => Ok(PresetName::Fig2a),
            "fig2c" => Ok(PresetName::Fig2c),
            "fig3" => Ok(PresetName::Fig3),
            other => Err(Error::validation("preset.name", format!("unknown preset `{other}` (fig2a, fig2c, fig3)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Fig2a => "fig2a",
            PresetName::Fig2c => "fig2c",
            PresetName::Fig3 => "fig3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Paper,
    Decision,
    Derived,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub path: String,
    pub value: String,
    pub source: Source,
    pub note: &'static str,
}

/// Fully expanded preset parameters. Frequencies are in units of ω̄_M.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetParams {
    pub name: PresetName,
    pub ratio: f64,
    pub g_bar: f64,
    pub static_g: f64,
    pub omega_m: f64,
    pub omega_d: f64,
    pub detuning: f64,
    pub detuning2: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub n_a: f64,
    pub n_b: f64,
    /// Only for `fig3`.
    pub probe: Option<Probe>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub ratio: f64,
    pub detuning: f64,
    pub kappa: f64,
}

/// Every field of [`PresetParams`] as (key, default, provenance, note).
fn defaults(name: PresetName) -> Vec<(&'static str, f64, Source, &'static str)> {
    let room = thermal_occupation(ROOM_TEMPERATURE_K, REFERENCE_FREQUENCY_HZ);
    let mut d = vec![
        ("ratio", 0.9, Source::Decision, "one of the Fig. 2 panel values; sweeps override it"),
        ("g_bar", 0.02, Source::Paper, "g = 18.5 kHz at a 925 kHz mechanical frequency"),
        ("static_g", 0.0, Source::Paper, "the coupling is purely modulated"),
        ("omega_m", 1.0, Source::Paper, "unit of frequency"),
        ("omega_d", 0.05, Source::Paper, "omega_d / omega_M"),
        ("detuning", -1.0, Source::Paper, "cooling at Delta = -omega_M"),
        ("detuning2", 0.0, Source::Paper, "unmodulated detuning"),
        ("kappa", 1.0, Source::Paper, "kappa / omega_M"),
        ("gamma_m", 2.3e-5, Source::Paper, "Gamma_M / omega_M"),
        ("n_a", 0.0, Source::Paper, "zero-temperature optical bath"),
        ("n_b", room, Source::Derived, "Bose occupation at 300 K and 925 kHz"),
    ];
    match name {
        PresetName::Fig2a | PresetName::Fig2c => {}
        PresetName::Fig3 => {
            for entry in d.iter_mut() {
                match entry.0 {
                    "ratio" => {
                        *entry = (
                            "ratio",
                            std::f64::consts::SQRT_2,
                            Source::Paper,
                            "suppression point omega_2/omega_d = sqrt 2",
                        )
                    }
                    "n_b" => {
                        *entry = (
                            "n_b",
                            FIG3_MECHANICAL_OCCUPATION,
                            Source::Decision,
                            "cooled mechanical occupation n_b < 1 regime",
                        )
                    }
                    _ => {}
                }
            }
            d.push((
                "probe_ratio",
                FIG3_PROBE_RATIO,
                Source::Decision,
                "probe coupling is not quoted; equal to the cooling coupling",
            ));
            d.push(("probe_detuning", 0.0, Source::Paper, "resonant probe"));
            d.push(("probe_kappa", 1.0, Source::Decision, "probe linewidth taken equal to the cooling mode"));
        }
    }
    d
}

pub const PRESET_KEYS: [&str; 15] = [
    "ratio",
    "g_bar",
    "static_g",
    "omega_m",
    "omega_d",
    "detuning",
    "detuning2",
    "kappa",
    "gamma_m",
    "n_a",
    "n_b",
    "probe_ratio",
    "probe_detuning",
    "probe_kappa",
    "cooperativity",
];

impl PresetParams {
    /// Preset with every default applied, plus the provenance of each value.
    pub fn defaults(name: PresetName) -> (Self, Vec<Provenance>) {
        let mut p = PresetParams {
            name,
            ratio: 0.0,
            g_bar: 0.0,
            static_g: 0.0,
            omega_m: 0.0,
            omega_d: 0.0,
            detuning: 0.0,
            detuning2: 0.0,
            kappa: 0.0,
            gamma_m: 0.0,
            n_a: 0.0,
            n_b: 0.0,
            probe: (name == PresetName::Fig3).then_some(Probe { ratio: 0.0, detuning: 0.0, kappa: 0.0 }),
        };
        let mut prov = Vec::new();
        for (key, value, source, note) in defaults(name) {
            p.set(key, value).expect("default keys are valid");
            prov.push(Provenance { path: format!("preset.{key}"), value: value.to_string(), source, note });
        }
        (p, prov)
    }

    pub fn fig2a(ratio: f64) -> Self {
        let mut p = PresetParams::defaults(PresetName::Fig2a).0;
        p.ratio = ratio;
        p
    }

    pub fn fig3(ratio: f64) -> Self {
        let mut p = PresetParams::defaults(PresetName::Fig3).0;
        p.ratio = ratio;
        p
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        let probe = |f: fn(&Probe) -> f64| {
            self.probe
                .as_ref()
                .map(f)
                .ok_or_else(|| Error::validation(format!("preset.{key}"), "only the fig3 preset has a probe mode"))
        };
        Ok(match key {
            "ratio" => self.ratio,
            "g_bar" => self.g_bar,
            "static_g" => self.static_g,
            "omega_m" => self.omega_m,
            "omega_d" => self.omega_d,
            "detuning" => self.detuning,
            "detuning2" => self.detuning2,
            "kappa" => self.kappa,
            "gamma_m" => self.gamma_m,
            "n_a" => self.n_a,
            "n_b" => self.n_b,
            "probe_ratio" => probe(|p| p.ratio)?,
            "probe_detuning" => probe(|p| p.detuning)?,
            "probe_kappa" => probe(|p| p.kappa)?,
            "cooperativity" => self.trap().cooperativity(),
            other => return Err(Error::validation(format!("preset.{other}"), "unknown preset parameter")),
        })
    }

    /// Sets one parameter. `cooperativity` is not stored: it fixes ḡ at the
    /// current κ and Γ_M.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let field = format!("preset.{key}");
        if !value.is_finite() {
            return Err(Error::validation(field, "must be finite"));
        }
        let no_probe = || Error::validation(format!("preset.{key}"), "only the fig3 preset has a probe mode");
        match key {
            "ratio" => self.ratio = value,
            "g_bar" => self.g_bar = value,
            "static_g" => self.static_g = value,
            "omega_m" => self.omega_m = value,
            "omega_d" => self.omega_d = value,
            "detuning" => self.detuning = value,
            "detuning2" => self.detuning2 = value,
            "kappa" => self.kappa = value,
            "gamma_m" => self.gamma_m = value,
            "n_a" => self.n_a = value,
            "n_b" => self.n_b = value,
            "probe_ratio" => self.probe.as_mut().ok_or_else(no_probe)?.ratio = value,
            "probe_detuning" => self.probe.as_mut().ok_or_else(no_probe)?.detuning = value,
            "probe_kappa" => self.probe.as_mut().ok_or_else(no_probe)?.kappa = value,
            "cooperativity" => {
                if value < 0.0 {
                    return Err(Error::validation(field, "must be >= 0"));
                }
                self.g_bar = self.trap().with_cooperativity(value).g_bar;
            }
            other => return Err(Error::validation(format!("preset.{other}"), "unknown preset parameter")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive =
            [("omega_d", self.omega_d), ("kappa", self.kappa), ("gamma_m", self.gamma_m), ("omega_m", self.omega_m)];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(Error::validation(format!("preset.{k}"), "must be > 0"));
            }
        }
        for (k, v) in [("n_a", self.n_a), ("n_b", self.n_b)] {
            if !(v >= 0.0) {
                return Err(Error::validation(format!("preset.{k}"), "must be >= 0"));
            }
        }
        if let Some(p) = &self.probe {
            if !(p.kappa > 0.0) {
                return Err(Error::validation("preset.probe_kappa", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn trap(&self) -> HybridTrap {
        HybridTrap {
            g_bar: self.g_bar,
            static_g: self.static_g,
            omega_m: self.omega_m,
            omega2: self.ratio * self.omega_d,
            omega_d: self.omega_d,
            detuning: self.detuning,
            detuning2: self.detuning2,
            kappa: self.kappa,
            gamma_m: self.gamma_m,
            n_a: self.n_a,
            n_b: self.n_b,
        }
    }

    /// The hybrid trap when the preset is one (the iterative route needs it).
    pub fn hybrid(&self) -> Option<HybridTrap> {
        self.probe.is_none().then(|| self.trap())
    }

    pub fn system(&self) -> SystemSpec {
        let trap = self.trap();
        let Some(probe) = self.probe else {
            return trap.system();
        };
        let omega2 = trap.omega2;
        let mut modulations = Vec::new();
        if trap.g_bar != 0.0 {
            modulations.push(ModulationSpec::sine(ModulationTarget::Coupling(0), 1, trap.g_bar));
            modulations.push(ModulationSpec::sine(ModulationTarget::Coupling(1), 1, probe.ratio * trap.g_bar));
        }
        if omega2 != 0.0 {
            modulations.push(ModulationSpec::cosine(ModulationTarget::Frequency(2), 2, omega2));
        }
        if trap.detuning2 != 0.0 {
            modulations.push(ModulationSpec::cosine(ModulationTarget::Frequency(0), 2, trap.detuning2));
        }
        SystemSpec {
            modes: vec![
                ModeSpec::optical("cooling", trap.detuning, trap.kappa, trap.n_a),
                ModeSpec::optical("probe", probe.detuning, probe.kappa, trap.n_a),
                ModeSpec::mechanical("mechanics", trap.omega_m, trap.gamma_m, trap.n_b),
            ],
            couplings: vec![
                CouplingSpec { first: 0, second: 2, g: trap.static_g },
                CouplingSpec { first: 1, second: 2, g: probe.ratio * trap.static_g },
            ],
            modulations,
            drive_frequency: trap.omega_d,
        }
    }

    /// Mode read out by default: the cavity for the trap, the probe for fig3.
    pub fn detected_mode(&self) -> usize {
        if self.probe.is_some() {
            1
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2a_expands_to_the_trap() {
        let p = PresetParams::fig2a(0.9);
        let t = p.hybrid().unwrap();
        assert_eq!(t, HybridTrap::fig2a(0.9));
        assert!((t.n_b - 6.7578e6).abs() / 6.7578e6 < 1e-4);
    }

    #[test]
    fn cooperativity_sets_the_coupling() {
        let (mut p, _) = PresetParams::defaults(PresetName::Fig2c);
        p.set("cooperativity", 100.0).unwrap();
        assert!((p.get("cooperativity").unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn fig3_has_two_cavities_sharing_the_modulation() {
        let p = PresetParams::fig3(std::f64::consts::SQRT_2);
        let spec = p.system();
        assert_eq!(spec.modes.len(), 3);
        assert_eq!(spec.modes[1].frequency, 0.0);
        let series = spec.fourier_series().unwrap();
        let h1 = series.harmonic(1).unwrap();
        // Cooling (0) and probe (2) rows both couple to the mechanics (4).
        assert!(h1[(0, 4)].norm() > 0.0 && (h1[(0, 4)] - h1[(2, 4)]).norm() < 1e-15);
        assert_eq!(p.detected_mode(), 1);
    }

    #[test]
    fn probe_parameters_need_fig3() {
        let mut p = PresetParams::fig2a(0.5);
        assert!(matches!(p.set("probe_ratio", 0.1), Err(Error::Validation { .. })));
        assert!(matches!(p.set("nope", 0.1), Err(Error::Validation { .. })));
    }

    #[test]
    fn every_default_has_provenance() {
        for name in [PresetName::Fig2a, PresetName::Fig2c, PresetName::Fig3] {
            let (p, prov) = PresetParams::defaults(name);
            for entry in &prov {
                let key = entry.path.trim_start_matches("preset.");
                assert_eq!(p.get(key).unwrap().to_string(), entry.value);
            }
        }
    }
}
