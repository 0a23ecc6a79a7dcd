use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optomod_cli::config::{parse_literal, parse_toml_value, raw_from_toml, set_path, Config};
use optomod_cli::{exit_code, run, Command};
use optomod_core::{Error, Result};

#[derive(Parser)]
#[command(name = "optomod", version, about = "Noise spectra of periodically modulated optomechanical systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectrum of the first configured method.
    Spectrum(Opts),
    /// Every configured method on one grid, with a deviation table.
    Compare(Opts),
    /// Spectra and sideband ratios over the [sweep] axes.
    Sweep(Opts),
    /// Output homodyne spectra over phi in [0, pi].
    HomodyneMap(Opts),
    /// Output heterodyne spectrum at the configured beat.
    Heterodyne(Opts),
    /// Semiclassical Langevin ensemble and its Welch spectrum.
    Simulate(Opts),
    /// Spectrum change as the truncation K doubles.
    Converge(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// preset.name
    #[arg(long)]
    preset: Option<String>,
    /// preset.ratio (omega_2 / omega_d)
    #[arg(long)]
    ratio: Option<f64>,
    /// methods, comma separated
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// truncation.k: an integer or "auto"
    #[arg(short, long)]
    k: Option<String>,
    /// grid.start
    #[arg(long)]
    start: Option<f64>,
    /// grid.stop
    #[arg(long)]
    stop: Option<f64>,
    /// grid.points
    #[arg(long)]
    points: Option<usize>,
    /// detection.kind: intracavity, homodyne or heterodyne
    #[arg(long)]
    detection: Option<String>,
    /// detection.phi
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// simulator.seed
    #[arg(long)]
    seed: Option<u64>,
    /// simulator.ensemble
    #[arg(long)]
    ensemble: Option<usize>,
    /// output.dir
    #[arg(short, long)]
    out: Option<String>,
    /// output.prefix
    #[arg(long)]
    prefix: Option<String>,
    /// Any config key, e.g. --set preset.n_b=1e3 (repeatable, applied last).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

impl Opts {
    fn load(&self) -> Result<(Config, Vec<optomod_cli::presets::Provenance>)> {
        let mut tree = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                parse_toml_value(&text)?
            }
            None => toml::Value::Table(toml::Table::new()),
        };
        let float = |x: f64| toml::Value::Float(x);
        let int = |x: u64| toml::Value::Integer(x as i64);
        let mut flags: Vec<(&str, toml::Value)> = Vec::new();
        if let Some(v) = &self.preset {
            flags.push(("preset.name", toml::Value::String(v.clone())));
        }
        if let Some(v) = self.ratio {
            flags.push(("preset.ratio", float(v)));
        }
        if let Some(v) = &self.methods {
            flags.push(("methods", toml::Value::Array(v.iter().map(|m| toml::Value::String(m.clone())).collect())));
        }
        if let Some(v) = &self.k {
            flags.push(("truncation.k", parse_literal(v)));
        }
        if let Some(v) = self.start {
            flags.push(("grid.start", float(v)));
        }
        if let Some(v) = self.stop {
            flags.push(("grid.stop", float(v)));
        }
        if let Some(v) = self.points {
            flags.push(("grid.points", int(v as u64)));
        }
        if let Some(v) = &self.detection {
            flags.push(("detection.kind", toml::Value::String(v.clone())));
        }
        if let Some(v) = self.phi {
            flags.push(("detection.phi", float(v)));
        }
        if let Some(v) = self.seed {
            if v > i64::MAX as u64 {
                return Err(Error::validation("simulator.seed", "must fit in a signed 64-bit integer"));
            }
            flags.push(("simulator.seed", int(v)));
        }
        if let Some(v) = self.ensemble {
            flags.push(("simulator.ensemble", int(v as u64)));
        }
        if let Some(v) = &self.out {
            flags.push(("output.dir", toml::Value::String(v.clone())));
        }
        if let Some(v) = &self.prefix {
            flags.push(("output.prefix", toml::Value::String(v.clone())));
        }
        for (path, value) in flags {
            set_path(&mut tree, path, value)?;
        }
        for s in &self.set {
            let (path, value) = s
                .split_once('=')
                .ok_or_else(|| Error::validation("--set", format!("expected PATH=VALUE, got `{s}`")))?;
            set_path(&mut tree, path.trim(), parse_literal(value.trim()))?;
        }
        Config::from_raw(raw_from_toml(tree)?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Cmd::Spectrum(o) => (Command::Spectrum, o),
        Cmd::Compare(o) => (Command::Compare, o),
        Cmd::Sweep(o) => (Command::Sweep, o),
        Cmd::HomodyneMap(o) => (Command::HomodyneMap, o),
        Cmd::Heterodyne(o) => (Command::Heterodyne, o),
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::Converge(o) => (Command::Converge, o),
    };
    let code = match opts.load().and_then(|(cfg, prov)| run(command, &cfg, &prov)) {
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Ok(outcome) => {
            match &outcome.result {
                Ok(report) => {
                    for f in &report.failures {
                        eprintln!("assertion failed: {f}");
                    }
                }
                Err(e) => eprintln!("error: {e}"),
            }
            println!("{}", outcome.manifest.display());
            outcome.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
