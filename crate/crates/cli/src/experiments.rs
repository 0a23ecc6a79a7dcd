//! Experiment runners behind the CLI subcommands.
//!
//! Each runner computes its spectra, writes CSV files through an [`Emitter`]
//! and returns a [`Report`] whose summary ends up in the run manifest.
//! Failed equivalence assertions are returned as `failures` rather than as
//! errors so that the outputs are still written.

use std::f64::consts::{PI, SQRT_2};

use optomod_core::iterative::iterative_spectrum;
use optomod_core::psd::{Welch, WelchConfig};
use optomod_core::spectra::{
    converge_with, heterodyne_index, heterodyne_spectrum, homodyne_spectrum, homodyne_value, output_spectrum,
    resolution_check, sideband_ratio, spectrum_floquet, spectrum_shifted, ConvergenceReport, DetectionKind,
    DetectionSpec, HomodyneMap, SidebandRatio, RESOLUTION_THRESHOLD,
};
use optomod_core::stochastic::{
    binned_ratio, effective_step, expected_psd, integrate_member, semiclassical_analytic, sideband_bins, simulate_psd,
    Observable, SdeConfig,
};
use optomod_core::transfer::standard_spectrum_oracle;
use optomod_core::{Error, Method, ModeKind, Result, SpectrumResult};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Built, Config, KChoice};
use crate::emit::{num, Emitter};

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub summary: Value,
    /// Assertions that did not hold; a non-empty list maps to exit status 4.
    pub failures: Vec<String>,
}

/// A scalar spectrum for the configured detection, plus the full matrix
/// spectrum when the method produces one.
pub struct Computed {
    pub spectrum: SpectrumResult,
    pub full: Option<SpectrumResult>,
    pub k: Option<usize>,
    pub convergence: Option<ConvergenceReport>,
}

fn method_k(cfg: &Config, built: &Built, method: Method) -> usize {
    let min = match cfg.detection.kind {
        DetectionKind::OutputHeterodyne => {
            built.series.max_harmonic()
                + heterodyne_index(cfg.detection.beat, built.series.drive_frequency)
                    .map_or(0, |n| n.unsigned_abs() as usize)
        }
        _ => built.series.max_harmonic(),
    };
    match method {
        Method::Iterative | Method::Oracle | Method::Stochastic => 0,
        _ => min.max(1),
    }
}

/// Spectrum of `method` at truncation `k`, before projection.
fn raw_spectrum(cfg: &Config, built: &Built, method: Method, grid: &[f64], k: usize) -> Result<SpectrumResult> {
    let det = &cfg.detection;
    let (series, noise) = (&built.series, &built.noise);
    match (det.kind, method) {
        (DetectionKind::Intracavity, Method::Shifted) => spectrum_shifted(series, noise, grid, k),
        (DetectionKind::Intracavity, Method::Floquet) => spectrum_floquet(series, noise, grid, k),
        (DetectionKind::Intracavity, Method::Oracle) => standard_spectrum_oracle(series, noise, grid),
        (DetectionKind::Intracavity, Method::Iterative) => {
            let trap = built
                .hybrid
                .as_ref()
                .ok_or_else(|| Error::validation("methods", "the iterative method needs the fig2a or fig2c preset"))?;
            if det.mode != 0 || det.phi != 0.0 {
                return Err(Error::validation(
                    "detection",
                    "the iterative method gives the cavity amplitude quadrature only (mode = cavity, phi = 0)",
                ));
            }
            iterative_spectrum(trap, grid, cfg.truncation.iterative_order)
        }
        (DetectionKind::OutputHomodyne, Method::Shifted) => {
            homodyne_spectrum(series, noise, &DetectionSpec::homodyne(det.mode, det.phi), grid, k)
        }
        (DetectionKind::OutputHeterodyne, Method::Shifted) => {
            heterodyne_spectrum(series, noise, &DetectionSpec::heterodyne(det.mode, det.beat), grid, k)
        }
        (_, m) => Err(Error::validation(
            "methods",
            format!("output detection is computed with the shifted method, not `{}`", m.name()),
        )),
    }
}

pub fn compute(cfg: &Config, built: &Built, method: Method, grid: &[f64]) -> Result<Computed> {
    let kmin = method_k(cfg, built, method);
    let (raw, k, convergence) = if kmin == 0 {
        (raw_spectrum(cfg, built, method, grid, 0)?, None, None)
    } else {
        match cfg.truncation.k {
            KChoice::Fixed(k) => (raw_spectrum(cfg, built, method, grid, k)?, Some(k), None),
            KChoice::Auto => {
                let (s, rep) = converge_with(kmin, cfg.truncation.auto, |k| raw_spectrum(cfg, built, method, grid, k))?;
                (s, Some(rep.k), Some(rep))
            }
        }
    };
    let (spectrum, full) = match raw.matrices() {
        Some(_) => (raw.quadrature(cfg.detection.mode, cfg.detection.phi)?, Some(raw)),
        None => (raw, None),
    };
    Ok(Computed { spectrum, full, k, convergence })
}

/// (ω̄_M, ω_d) when the model has split sidebands to measure.
pub fn sideband_centre(built: &Built) -> Option<(f64, f64)> {
    if !built.series.is_modulated() {
        return None;
    }
    let omega_m = match &built.hybrid {
        Some(t) => t.omega_m,
        None => built.spec.modes.iter().find(|m| m.kind == ModeKind::Mechanical)?.frequency,
    };
    Some((omega_m, built.series.drive_frequency))
}

fn ratio_of(built: &Built, s: &SpectrumResult) -> Option<SidebandRatio> {
    let (wm, wd) = sideband_centre(built)?;
    sideband_ratio(s, wm, wd).ok()
}

fn ratio_json(r: &Option<SidebandRatio>) -> Value {
    match r {
        None => Value::Null,
        Some(r) => json!({
            "ratio": r.ratio,
            "upper": {"omega": r.upper.position, "height": r.upper.height, "suppressed": r.upper.suppressed},
            "lower": {"omega": r.lower.position, "height": r.lower.height, "suppressed": r.lower.suppressed},
        }),
    }
}

fn convergence_json(c: &Option<ConvergenceReport>) -> Value {
    match c {
        None => Value::Null,
        Some(c) => json!({
            "k": c.k,
            "converged": c.converged,
            "history": c.history.iter().map(|(k, d)| json!([k, d])).collect::<Vec<_>>(),
        }),
    }
}

fn peak(s: &SpectrumResult) -> (f64, f64) {
    let v = s.scalars().unwrap_or_default();
    let i = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0);
    (s.omega.get(i).copied().unwrap_or(f64::NAN), v.get(i).copied().unwrap_or(f64::NAN))
}

/// sqrt(Σ|a−b|²) / sqrt(Σ|a|²) over the scalar spectra.
pub fn l2_relative(a: &SpectrumResult, b: &SpectrumResult) -> f64 {
    let (x, y) = (a.scalars().unwrap_or_default(), b.scalars().unwrap_or_default());
    let num: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    let den: f64 = x.iter().map(|p| p * p).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn spectrum_rows(s: &SpectrumResult) -> Vec<Vec<f64>> {
    let v = s.scalars().unwrap_or_default();
    match &s.stderr {
        Some(e) => s.omega.iter().zip(v).zip(e).map(|((w, x), e)| vec![*w, *x, *e]).collect(),
        None => s.omega.iter().zip(v).map(|(w, x)| vec![*w, *x]).collect(),
    }
}

fn write_spectrum(out: &mut Emitter, suffix: &str, s: &SpectrumResult) -> Result<()> {
    let header: &[&str] = if s.stderr.is_some() { &["omega", "value", "stderr"] } else { &["omega", "value"] };
    out.table(suffix, header, spectrum_rows(s))?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn run_spectrum(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    let built = cfg.build()?;
    let method = cfg.methods[0];
    let c = compute(cfg, &built, method, &cfg.grid.omega())?;
    write_spectrum(out, ".csv", &c.spectrum)?;
    let (pw, pv) = peak(&c.spectrum);
    Ok(Report {
        summary: json!({
            "method": method.name(),
            "label": c.spectrum.meta.label,
            "k": c.k,
            "model_digest": built.series.digest(&built.noise),
            "peak": {"omega": pw, "value": pv},
            "sideband_ratio": ratio_json(&ratio_of(&built, &c.spectrum)),
            "convergence": convergence_json(&c.convergence),
        }),
        failures: vec![],
    })
}

pub fn run_compare(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    if cfg.methods.len() < 2 {
        return Err(Error::validation("methods", "compare needs at least two methods"));
    }
    let built = cfg.build()?;
    let grid = cfg.grid.omega();
    let results: Vec<(Method, Computed)> =
        cfg.methods.iter().map(|&m| compute(cfg, &built, m, &grid).map(|c| (m, c))).collect::<Result<_>>()?;
    for (m, c) in &results {
        write_spectrum(out, &format!(".{}.csv", m.name()), &c.spectrum)?;
    }

    let mut rows = Vec::new();
    let mut deviations = Vec::new();
    let mut failures = Vec::new();
    let mut equivalence = Value::Null;
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let ((ma, a), (mb, b)) = (&results[i], &results[j]);
            let max_rel = a.spectrum.max_relative_deviation(&b.spectrum)?;
            let l2 = l2_relative(&a.spectrum, &b.spectrum);
            rows.push(vec![ma.name().to_string(), mb.name().to_string(), num(max_rel), num(l2)]);
            deviations
                .push(json!({"first": ma.name(), "second": mb.name(), "max_relative": max_rel, "l2_relative": l2}));
            let pair = [*ma, *mb];
            if pair.contains(&Method::Shifted) && pair.contains(&Method::Floquet) {
                let dev = match (&a.full, &b.full) {
                    (Some(x), Some(y)) => x.max_relative_deviation(y)?,
                    _ => max_rel,
                };
                let pass = dev < cfg.equivalence_tol;
                if !pass {
                    failures.push(format!(
                        "shifted vs floquet deviation {dev:e} exceeds tolerance {:e}",
                        cfg.equivalence_tol
                    ));
                }
                equivalence = json!({"deviation": dev, "tolerance": cfg.equivalence_tol, "pass": pass});
            }
        }
    }
    let header: Vec<String> =
        ["first", "second", "max_relative", "l2_relative"].iter().map(|s| s.to_string()).collect();
    out.csv(".deviations.csv", &header, &rows)?;

    let mut peak_rows = Vec::new();
    let mut peaks = Vec::new();
    for (m, c) in &results {
        let (pw, pv) = peak(&c.spectrum);
        let r = ratio_of(&built, &c.spectrum);
        let cell = |x: Option<f64>| x.map(num).unwrap_or_default();
        peak_rows.push(vec![
            m.name().to_string(),
            num(pw),
            num(pv),
            cell(r.map(|r| r.ratio)),
            cell(r.map(|r| r.upper.height)),
            cell(r.map(|r| r.lower.height)),
        ]);
        peaks.push(
            json!({"method": m.name(), "k": c.k, "peak": {"omega": pw, "value": pv}, "sideband_ratio": ratio_json(&r)}),
        );
    }
    let header: Vec<String> = ["method", "peak_omega", "peak_value", "ratio", "upper_height", "lower_height"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    out.csv(".peaks.csv", &header, &peak_rows)?;

    Ok(Report {
        summary: json!({
            "model_digest": built.series.digest(&built.noise),
            "deviations": deviations,
            "peaks": peaks,
            "equivalence": equivalence,
        }),
        failures,
    })
}

/// Golden-section search for the minimum of `f` on [lo, hi]; stops once the
/// bracket is narrower than `tol`. Returns (x, f(x)) of the best evaluation
/// and every evaluation in order.
pub fn golden_section(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<((f64, f64), Vec<(f64, f64)>)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut evals = Vec::new();
    let mut eval = |x: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        let y = f(x)?;
        evals.push((x, y));
        Ok(y)
    };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c, &mut evals)?;
    let mut fd = eval(d, &mut evals)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c, &mut evals)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d, &mut evals)?;
        }
    }
    let best = evals.iter().copied().min_by(|p, q| p.1.total_cmp(&q.1)).expect("at least two evaluations");
    Ok((best, evals))
}

struct SweepPoint {
    params: Vec<(String, f64)>,
    spectra: Vec<(Method, Computed)>,
    ratios: Vec<Option<SidebandRatio>>,
    margin: Option<f64>,
}

fn sweep_point(cfg: &Config, params: &[(String, f64)]) -> Result<SweepPoint> {
    let mut point = cfg.clone();
    for (p, v) in params {
        point = point.with_parameter(p, *v)?;
    }
    let built = point.build()?;
    let grid = point.grid.omega();
    let spectra: Vec<(Method, Computed)> =
        point.methods.iter().map(|&m| compute(&point, &built, m, &grid).map(|c| (m, c))).collect::<Result<_>>()?;
    let ratios = spectra.iter().map(|(_, c)| ratio_of(&built, &c.spectrum)).collect();
    let margin = built
        .hybrid
        .as_ref()
        .map(|t| resolution_check(t.cooperativity(), t.gamma_m, t.omega_d, RESOLUTION_THRESHOLD).margin);
    Ok(SweepPoint { params: params.to_vec(), spectra, ratios, margin })
}

pub fn run_sweep(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    let sweep =
        cfg.sweep.as_ref().ok_or_else(|| Error::validation("sweep", "the sweep command needs a [sweep] section"))?;
    let points: Vec<SweepPoint> = sweep.points().par_iter().map(|p| sweep_point(cfg, p)).collect::<Result<_>>()?;

    let mut index = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let suffix = format!(".point{i:03}.csv");
        let mut header = vec!["omega".to_string()];
        header.extend(p.spectra.iter().map(|(m, _)| m.name().to_string()));
        let omega = &p.spectra[0].1.spectrum.omega;
        let rows: Vec<Vec<String>> = (0..omega.len())
            .map(|j| {
                let mut r = vec![num(omega[j])];
                r.extend(p.spectra.iter().map(|(_, c)| num(c.spectrum.scalars().unwrap_or_default()[j])));
                r
            })
            .collect();
        out.csv(&suffix, &header, &rows)?;
        index.push(json!({
            "file": format!("{}{suffix}", cfg.output.prefix),
            "parameters": p.params.iter().map(|(k, v)| json!({"path": k, "value": v})).collect::<Vec<_>>(),
            "k": p.spectra.iter().map(|(m, c)| json!({"method": m.name(), "k": c.k})).collect::<Vec<_>>(),
            "sideband_ratio": p.spectra.iter().zip(&p.ratios).map(|((m, _), r)| json!({"method": m.name(), "ratio": ratio_json(r)})).collect::<Vec<_>>(),
            "resolution_margin": p.margin,
        }));
    }
    if let Some(first) = points.first() {
        let mut header: Vec<String> = first.params.iter().map(|(k, _)| k.clone()).collect();
        header.extend(cfg.methods.iter().map(|m| format!("ratio_{}", m.name())));
        header.push("resolution_margin".into());
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                let mut r: Vec<String> = p.params.iter().map(|(_, v)| num(*v)).collect();
                r.extend(p.ratios.iter().map(|x| x.map(|x| num(x.ratio)).unwrap_or_default()));
                r.push(p.margin.map(num).unwrap_or_default());
                r
            })
            .collect();
        out.csv(".ratios.csv", &header, &rows)?;
    }

    let mut minimum = Value::Null;
    if let Some(m) = &sweep.minimize {
        let method = cfg.methods[0];
        let objective = |x: f64| -> Result<f64> {
            let p = cfg.with_parameter(&m.parameter, x)?;
            let built = p.build()?;
            let c = compute(&p, &built, method, &p.grid.omega())?;
            ratio_of(&built, &c.spectrum)
                .map(|r| r.ratio)
                .ok_or_else(|| Error::validation("sweep.minimize", "the model has no split sidebands to compare"))
        };
        let ((x, r), evals) = golden_section(objective, m.lo, m.hi, m.tol)?;
        out.table(".minimize.csv", &[m.parameter.as_str(), "ratio"], evals.iter().map(|(x, y)| vec![*x, *y]))?;
        let reference = (m.parameter == "preset.ratio").then_some(SQRT_2);
        minimum = json!({
            "parameter": m.parameter,
            "method": method.name(),
            "argmin": x,
            "ratio": r,
            "bracket": [m.lo, m.hi],
            "tol": m.tol,
            "evaluations": evals.len(),
            "reference": reference,
            "distance_from_reference": reference.map(|s| (x - s).abs()),
        });
    }
    Ok(Report { summary: json!({"points": index, "minimum": minimum}), failures: vec![] })
}

pub fn homodyne_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| PI * i as f64 / (points - 1) as f64).collect()
}

pub fn compute_homodyne_map(
    cfg: &Config,
    built: &Built,
) -> Result<(HomodyneMap, Option<usize>, Option<ConvergenceReport>)> {
    let grid = cfg.grid.omega();
    let mode = cfg.detection.mode;
    let f = |k| output_spectrum(&built.series, &built.noise, mode, &grid, k);
    let kmin = built.series.max_harmonic().max(1);
    let (s, k, conv) = match cfg.truncation.k {
        KChoice::Fixed(k) => (f(k)?, k, None),
        KChoice::Auto => {
            let (s, rep) = converge_with(kmin, cfg.truncation.auto, f)?;
            let k = rep.k;
            (s, k, Some(rep))
        }
    };
    let phis = homodyne_grid(cfg.detection.phi_points);
    let m = s.matrices().unwrap_or_default();
    let values = phis.iter().map(|&phi| m.iter().map(|x| homodyne_value(x, phi)).collect()).collect();
    Ok((HomodyneMap { phis, omega: grid, values }, Some(k), conv))
}

pub fn run_homodyne_map(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    if cfg.detection.kind != DetectionKind::OutputHomodyne {
        return Err(Error::validation("detection.kind", "homodyne-map needs homodyne detection"));
    }
    let built = cfg.build()?;
    let (map, k, conv) = compute_homodyne_map(cfg, &built)?;
    let mut header = vec!["omega\\phi".to_string()];
    header.extend(map.phis.iter().map(|p| num(*p)));
    let rows: Vec<Vec<String>> = (0..map.omega.len())
        .map(|j| {
            let mut r = vec![num(map.omega[j])];
            r.extend(map.values.iter().map(|row| num(row[j])));
            r
        })
        .collect();
    out.csv(".map.csv", &header, &rows)?;
    let min = map.minimum();
    let flat_phi0 = map.values[0].iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Ok(Report {
        summary: json!({
            "k": k,
            "convergence": convergence_json(&conv),
            "shot_noise_floor": 1.0,
            "minimum": {"value": min.value, "phi": min.phi, "phi_over_pi": min.phi / PI, "omega": min.omega},
            "squeezing_fraction": 1.0 - min.value,
            "max_squeezing_db": map.max_squeezing_db(),
            "phi0_max_deviation_from_floor": flat_phi0,
        }),
        failures: vec![],
    })
}

pub fn run_heterodyne(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    if cfg.detection.kind != DetectionKind::OutputHeterodyne {
        return Err(Error::validation("detection.kind", "heterodyne needs heterodyne detection"));
    }
    let built = cfg.build()?;
    let n = heterodyne_index(cfg.detection.beat, built.series.drive_frequency)?;
    let c = compute(cfg, &built, Method::Shifted, &cfg.grid.omega())?;
    write_spectrum(out, ".csv", &c.spectrum)?;
    let (pw, pv) = peak(&c.spectrum);
    Ok(Report {
        summary: json!({
            "beat": cfg.detection.beat,
            "shift_index": n,
            "k": c.k,
            "convergence": convergence_json(&c.convergence),
            "peak": {"omega": pw, "value": pv},
        }),
        failures: vec![],
    })
}

pub fn sde_config(cfg: &Config) -> SdeConfig {
    let s = &cfg.simulator;
    let observable = Observable::Quadrature { mode: cfg.detection.mode, phi: cfg.detection.phi };
    SdeConfig {
        dt: s.dt,
        t_sim: s.t_sim,
        burn_in: s.burn_in,
        ensemble: s.ensemble,
        seed: s.seed,
        noise_scale: s.noise_scale,
        observables: vec![observable],
        initial: None,
    }
}

pub fn run_simulate(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    if cfg.detection.kind != DetectionKind::Intracavity {
        return Err(Error::validation("detection.kind", "the simulator records intracavity quadratures"));
    }
    let built = cfg.build()?;
    let sde = sde_config(cfg);
    let welch_cfg = WelchConfig { segment_len: cfg.simulator.segment_len, band: cfg.simulator.band };
    let ens = simulate_psd(&built.series, &built.noise, &sde, welch_cfg)?;
    let welch = Welch::new(welch_cfg, ens.dt)?;
    let k = match cfg.truncation.k {
        KChoice::Fixed(k) => k,
        KChoice::Auto => {
            let kmin = built.series.max_harmonic().max(1);
            converge_with(kmin, cfg.truncation.auto, |k| {
                semiclassical_analytic(&built.series, &built.noise, &ens.omega, k)
            })?
            .1
            .k
        }
    };
    let expected = expected_psd(&built.series, &built.noise, &welch, sde.observables[0], k)?;
    let o = &ens.observables[0];
    let rows = (0..ens.omega.len()).map(|i| vec![ens.omega[i], o.mean[i], o.stderr[i], expected[i]]);
    out.table(".csv", &["omega", "value", "stderr", "expected"], rows)?;
    let within = (0..expected.len()).filter(|&i| (o.mean[i] - expected[i]).abs() <= 3.0 * o.stderr[i]).count();
    let ratio = sideband_centre(&built).and_then(|(wm, wd)| {
        let bins = sideband_bins(&ens.omega, &expected, wm, wd).ok()?;
        let sim = binned_ratio(&o.mean, Some(&o.stderr), bins);
        let exp = binned_ratio(&expected, None, bins);
        Some(json!({"simulated": sim.ratio, "stderr": sim.stderr, "expected": exp.ratio}))
    });
    if cfg.simulator.dump_trajectory {
        let traj = integrate_member(&built.series, &built.noise, &sde, 0)?;
        let path = out.dir().join(format!("{}.trajectory.bin", cfg.output.prefix));
        let mut file = std::io::BufWriter::new(
            std::fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        );
        traj.write_to(&mut file)?;
    }
    let (dt, steps) = effective_step(&built.series, cfg.simulator.dt);
    Ok(Report {
        summary: json!({
            "observable": o.label,
            "seed": cfg.simulator.seed,
            "members": ens.members,
            "segments": ens.segments,
            "dt": dt,
            "steps_per_period": steps,
            "bin_width": ens.bin_width,
            "k": k,
            "bins": expected.len(),
            "fraction_within_3_stderr": within as f64 / expected.len().max(1) as f64,
            "sideband_ratio": ratio,
            "trajectory": cfg.simulator.dump_trajectory.then(|| format!("{}.trajectory.bin", cfg.output.prefix)),
        }),
        failures: vec![],
    })
}

pub fn run_converge(cfg: &Config, out: &mut Emitter) -> Result<Report> {
    let built = cfg.build()?;
    let method = cfg.methods[0];
    let kmin = method_k(cfg, &built, method);
    if kmin == 0 {
        return Err(Error::validation("methods", format!("`{}` has no truncation to converge", method.name())));
    }
    let grid = cfg.grid.omega();
    let (_, rep) = converge_with(kmin, cfg.truncation.auto, |k| {
        raw_spectrum(cfg, &built, method, &grid, k).and_then(|s| match s.matrices() {
            Some(_) => s.quadrature(cfg.detection.mode, cfg.detection.phi),
            None => Ok(s),
        })
    })?;
    let rows = rep.history.iter().map(|(k, d)| vec![*k as f64, d.unwrap_or(f64::NAN)]);
    out.table(".convergence.csv", &["k", "relative_change"], rows)?;
    Ok(Report {
        summary: json!({"method": method.name(), "convergence": convergence_json(&Some(rep))}),
        failures: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_a_parabola_minimum() {
        let ((x, y), evals) = golden_section(|x| Ok((x - SQRT_2).powi(2)), 1.0, 2.0, 1e-4).unwrap();
        assert!((x - SQRT_2).abs() < 1e-4 && y < 1e-8);
        assert!(evals.len() < 30);
    }

    #[test]
    fn homodyne_phases_span_zero_to_pi() {
        let g = homodyne_grid(5);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[4], PI);
    }

    #[test]
    fn l2_of_identical_spectra_is_zero() {
        let cfg = crate::config::parse_config("[preset]\nname = \"fig2a\"\n[grid]\npoints = 16\n").unwrap().0;
        let built = cfg.build().unwrap();
        let c = compute(&cfg, &built, Method::Shifted, &cfg.grid.omega()).unwrap();
        assert_eq!(l2_relative(&c.spectrum, &c.spectrum), 0.0);
        assert_eq!(c.k, Some(8));
        assert!(c.full.is_some());
    }
}
