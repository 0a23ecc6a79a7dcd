//! Presets, configuration and experiment orchestration for `optomod`.
//!
//! A run parses a TOML config (see [`config`]), computes spectra with the
//! solvers of `optomod-core`, and writes CSV data plus a JSON manifest that
//! records the effective configuration, the provenance of every default and a
//! summary of the results.

pub mod config;
pub mod emit;
pub mod experiments;
pub mod presets;

use std::path::PathBuf;

use optomod_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::Config;
use crate::emit::Emitter;
use crate::experiments::Report;
use crate::presets::Provenance;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Compare,
    Sweep,
    HomodyneMap,
    Heterodyne,
    Simulate,
    Converge,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Compare => "compare",
            Command::Sweep => "sweep",
            Command::HomodyneMap => "homodyne-map",
            Command::Heterodyne => "heterodyne",
            Command::Simulate => "simulate",
            Command::Converge => "converge",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::IllConditioned { .. }
        | Error::Singular { .. }
        | Error::Residual { .. }
        | Error::Unstable { .. }
        | Error::Resolution(_) => EXIT_NUMERICAL,
        Error::Validation { .. }
        | Error::Reference(_)
        | Error::Contract(_)
        | Error::IndexOutOfRange { .. }
        | Error::Resonance { .. }
        | Error::Io(_) => EXIT_VALIDATION,
    }
}

pub struct RunOutcome {
    pub manifest: PathBuf,
    pub result: Result<Report>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match &self.result {
            Ok(r) if r.failures.is_empty() => EXIT_OK,
            Ok(_) => EXIT_ASSERTION,
            Err(e) => exit_code(e),
        }
    }
}

fn provenance_json(prov: &[Provenance]) -> Value {
    let mut sorted: Vec<&Provenance> = prov.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    serde_json::to_value(sorted).expect("provenance serialises")
}

/// Runs `command` and writes its outputs. The manifest is written even when
/// the computation fails, carrying the error.
pub fn run(command: Command, cfg: &Config, provenance: &[Provenance]) -> Result<RunOutcome> {
    let mut out = Emitter::new(&cfg.output)?;
    let result = match command {
        Command::Spectrum => experiments::run_spectrum(cfg, &mut out),
        Command::Compare => experiments::run_compare(cfg, &mut out),
        Command::Sweep => experiments::run_sweep(cfg, &mut out),
        Command::HomodyneMap => experiments::run_homodyne_map(cfg, &mut out),
        Command::Heterodyne => experiments::run_heterodyne(cfg, &mut out),
        Command::Simulate => experiments::run_simulate(cfg, &mut out),
        Command::Converge => experiments::run_converge(cfg, &mut out),
    };
    let (status, summary, failures, error) = match &result {
        Ok(r) if r.failures.is_empty() => ("ok", r.summary.clone(), r.failures.clone(), Value::Null),
        Ok(r) => ("assertion_failed", r.summary.clone(), r.failures.clone(), Value::Null),
        Err(e) => ("error", Value::Null, vec![], Value::from(e.to_string())),
    };
    let manifest = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_raw(),
        "provenance": provenance_json(provenance),
        "seed": cfg.simulator.seed,
        "tolerances": {
            "equivalence": cfg.equivalence_tol,
            "truncation": cfg.truncation.auto.tol,
            "golden_section": cfg.sweep.as_ref().and_then(|s| s.minimize.as_ref()).map(|m| m.tol),
        },
        "status": status,
        "summary": summary,
        "failures": failures,
        "error": error,
    });
    let manifest = out.manifest(manifest)?;
    Ok(RunOutcome { manifest, result })
}

/// Reads the effective configuration back out of a manifest.
pub fn config_from_manifest(text: &str) -> Result<Config> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::validation("<manifest>", e.to_string()))?;
    let raw = v.get("config").cloned().ok_or_else(|| Error::validation("config", "manifest has no config"))?;
    Ok(Config::from_raw(config::raw_from_json(raw)?)?.0)
}
