//! Measured spectra from the truncated transfer matrix.
//!
//! Conventions: S(ω) is the matrix ⟨c(ω) c(ω)†⟩ built as Σ T N T†, so S_00 of
//! an optical pair is ⟨a a†⟩ and S_01 is ⟨a a⟩. Output fields follow
//! a_out = a_in − √κ a with the shot-noise floor of a detected quadrature
//! normalised to 1.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CMat, HamiltonianFourierSeries, NoiseModel};
use crate::transfer::{BlockTemplate, TransferFactorization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Shifted,
    Floquet,
    Iterative,
    Stochastic,
    Oracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Shifted => "shifted",
            Method::Floquet => "floquet",
            Method::Iterative => "iterative",
            Method::Stochastic => "stochastic",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumValues {
    Matrix(Vec<CMat>),
    Scalar(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SpectrumMeta {
    pub truncation: Option<usize>,
    pub params_hash: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumResult {
    pub omega: Vec<f64>,
    pub m: i32,
    pub method: Method,
    pub values: SpectrumValues,
    pub stderr: Option<Vec<f64>>,
    pub meta: SpectrumMeta,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn matrices(&self) -> Option<&[CMat]> {
        match &self.values {
            SpectrumValues::Matrix(v) => Some(v),
            SpectrumValues::Scalar(_) => None,
        }
    }

    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.values {
            SpectrumValues::Scalar(v) => Some(v),
            SpectrumValues::Matrix(_) => None,
        }
    }

    /// Scalar projection of a matrix-valued spectrum.
    pub fn project(&self, label: &str, f: impl Fn(&CMat) -> f64) -> Result<SpectrumResult> {
        let m =
            self.matrices().ok_or_else(|| Error::Contract("projection requires a matrix-valued spectrum".into()))?;
        Ok(SpectrumResult {
            omega: self.omega.clone(),
            m: self.m,
            method: self.method,
            values: SpectrumValues::Scalar(m.iter().map(f).collect()),
            stderr: None,
            meta: SpectrumMeta { label: label.to_string(), ..self.meta.clone() },
        })
    }

    /// Spectrum of X_φ = (e^{iφ}c + e^{−iφ}c†)/√2 for the pair of `mode`.
    pub fn quadrature(&self, mode: usize, phi: f64) -> Result<SpectrumResult> {
        if let Some(m) = self.matrices().and_then(|m| m.first()) {
            if 2 * mode + 1 >= m.nrows() {
                return Err(Error::Contract(format!("mode {mode} outside a {}-dimensional spectrum", m.nrows())));
            }
        }
        self.project(&format!("X[{mode}](phi={phi})"), |s| quadrature_value(s, mode, phi))
    }

    /// max |self − other| / max |self| over the grid (entrywise for matrices).
    pub fn max_relative_deviation(&self, other: &SpectrumResult) -> Result<f64> {
        if self.omega.len() != other.omega.len() {
            return Err(Error::Contract("spectra are on different grids".into()));
        }
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        match (&self.values, &other.values) {
            (SpectrumValues::Matrix(a), SpectrumValues::Matrix(b)) => {
                for (x, y) in a.iter().zip(b) {
                    for (p, q) in x.iter().zip(y.iter()) {
                        diff = diff.max((p - q).norm());
                        scale = scale.max(p.norm());
                    }
                }
            }
            (SpectrumValues::Scalar(a), SpectrumValues::Scalar(b)) => {
                for (p, q) in a.iter().zip(b) {
                    diff = diff.max((p - q).abs());
                    scale = scale.max(p.abs());
                }
            }
            _ => return Err(Error::Contract("cannot compare matrix and scalar spectra".into())),
        }
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    /// Largest |Im S_ii| / |Re S_ii| and most negative Re S_ii / peak over
    /// the diagonal auto-correlators.
    pub fn diagonal_reality(&self) -> Option<(f64, f64)> {
        let m = self.matrices()?;
        let peak = m.iter().flat_map(|s| (0..s.nrows()).map(move |i| s[(i, i)].re)).fold(0.0, f64::max);
        let (mut imag, mut neg) = (0.0f64, 0.0f64);
        for s in m {
            for i in 0..s.nrows() {
                let z = s[(i, i)];
                if z.re != 0.0 {
                    imag = imag.max(z.im.abs() / z.re.abs());
                } else if z.im != 0.0 {
                    imag = f64::INFINITY;
                }
                if peak > 0.0 {
                    neg = neg.max(-z.re / peak);
                }
            }
        }
        Some((imag, neg))
    }
}

/// ½ vᵀ S v̄ with v = (e^{iφ}, e^{−iφ}) on the pair of `mode`.
pub fn quadrature_value(s: &CMat, mode: usize, phi: f64) -> f64 {
    0.5 * pair_form(s, 2 * mode, phi)
}

fn pair_form(s: &CMat, r: usize, phi: f64) -> f64 {
    let e = Complex64::from_polar(1.0, 2.0 * phi);
    (s[(r, r)] + s[(r + 1, r + 1)] + e * s[(r, r + 1)] + e.conj() * s[(r + 1, r)]).re
}

fn meta(series: &HamiltonianFourierSeries, noise: &NoiseModel, k: usize, label: &str) -> SpectrumMeta {
    SpectrumMeta { truncation: Some(k), params_hash: series.digest(noise), label: label.to_string() }
}

fn sandwich(acc: &mut CMat, t: &CMat, n: &CMat) {
    *acc += t * n * t.adjoint();
}

fn shifted_at(fact: &TransferFactorization, n: &CMat) -> Result<CMat> {
    let row = fact.row_blocks(0)?;
    let d = fact.dim;
    let mut s = CMat::zeros(d, d);
    for t in &row {
        sandwich(&mut s, t, n);
    }
    Ok(s)
}

/// Method (i): S(ω) = Σ_l T_{0l}(ω) N T_{0l}(ω)†.
pub fn spectrum_shifted(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    let tpl = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let values = grid.par_iter().map(|&w| shifted_at(&tpl.factor(w, k)?, &n)).collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Shifted,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, "S_cc"),
    })
}

const FREQ_KEY_SCALE: f64 = 1e13;

fn freq_key(w: f64) -> i64 {
    (w * FREQ_KEY_SCALE).round() as i64
}

/// Method (ii): S(ω) = Σ_p T_{−p,0}(ω + pω_d) N T_{−p,0}(ω + pω_d)†.
///
/// Every evaluation point ω_j + pω_d is factorized once even when several
/// (j, p) pairs land on it, which happens whenever the grid step divides ω_d.
pub fn spectrum_floquet(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    let tpl = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let d = series.dim();
    let ki = k as i64;
    let wd = series.drive_frequency;
    let shifts: Vec<i64> = if series.is_modulated() { (-ki..=ki).collect() } else { vec![0] };

    let mut points: BTreeMap<i64, (f64, Vec<(usize, i64)>)> = BTreeMap::new();
    for (j, &w) in grid.iter().enumerate() {
        for &p in &shifts {
            let f = w + p as f64 * wd;
            points.entry(freq_key(f)).or_insert_with(|| (f, Vec::new())).1.push((j, p));
        }
    }
    let entries: Vec<&(f64, Vec<(usize, i64)>)> = points.values().collect();
    let mut values = vec![CMat::zeros(d, d); grid.len()];
    for chunk in entries.chunks(1024) {
        let parts = chunk
            .par_iter()
            .map(|(f, uses)| {
                let col = tpl.factor(*f, k)?.column_blocks(0)?;
                Ok(uses
                    .iter()
                    .map(|&(j, p)| {
                        let t = &col[(k as i64 - p) as usize];
                        (j, t * &n * t.adjoint())
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        for (j, c) in parts.into_iter().flatten() {
            values[j] += c;
        }
    }
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Floquet,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, "S_cc"),
    })
}

/// Automatic truncation: K doubles from `start` until the relative change of
/// the spectrum drops below `tol`, or `max` is exceeded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoTruncation {
    pub start: usize,
    pub tol: f64,
    pub max: usize,
}

impl Default for AutoTruncation {
    fn default() -> Self {
        AutoTruncation { start: crate::transfer::DEFAULT_TRUNCATION, tol: 1e-8, max: 256 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    /// (K, relative change versus the previous K).
    pub history: Vec<(usize, Option<f64>)>,
    pub k: usize,
    pub converged: bool,
}

pub fn spectrum_shifted_auto(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    grid: &[f64],
    auto: AutoTruncation,
) -> Result<(SpectrumResult, ConvergenceReport)> {
    converge_with(series.max_harmonic(), auto, |k| spectrum_shifted(series, noise, grid, k))
}

/// Drives any K-parameterised spectrum computation to convergence.
pub fn converge_with(
    min_k: usize,
    auto: AutoTruncation,
    mut f: impl FnMut(usize) -> Result<SpectrumResult>,
) -> Result<(SpectrumResult, ConvergenceReport)> {
    let mut k = auto.start.max(min_k).max(1);
    let mut prev = f(k)?;
    let mut history = vec![(k, None)];
    loop {
        let next_k = 2 * k;
        if next_k > auto.max {
            return Ok((prev, ConvergenceReport { history, k, converged: false }));
        }
        let next = f(next_k)?;
        let change = next.max_relative_deviation(&prev)?;
        history.push((next_k, Some(change)));
        k = next_k;
        prev = next;
        if change < auto.tol {
            return Ok((prev, ConvergenceReport { history, k, converged: true }));
        }
    }
}

fn check_component_index(series: &HamiltonianFourierSeries, k: usize, m: i64) -> Result<()> {
    let limit = k as i64 - series.max_harmonic() as i64;
    if m.abs() > limit {
        return Err(Error::Contract(format!(
            "spectral component m = {m} needs |m| <= K - K_H = {limit}; increase the truncation"
        )));
    }
    Ok(())
}

/// S^(m)(ω) = Σ_l T_{0l}(ω) N T_{ml}(ω)† = ⟨c(ω) c(ω + mω_d)†⟩.
pub fn spectral_component(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    grid: &[f64],
    k: usize,
    m: i64,
) -> Result<SpectrumResult> {
    check_component_index(series, k, m)?;
    let tpl = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let d = series.dim();
    let values = grid
        .par_iter()
        .map(|&w| {
            let f = tpl.factor(w, k)?;
            let r0 = f.row_blocks(0)?;
            let rm = if m == 0 { r0.clone() } else { f.row_blocks(m)? };
            let mut s = CMat::zeros(d, d);
            for (a, b) in r0.iter().zip(&rm) {
                s += a * &n * b.adjoint();
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: m as i32,
        method: Method::Shifted,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, &format!("S^({m})")),
    })
}

/// n = 2Ω/ω_d, rejected unless integral to within 1e−9.
pub fn heterodyne_index(beat: f64, drive_frequency: f64) -> Result<i64> {
    if !(drive_frequency > 0.0) {
        return if beat == 0.0 { Ok(0) } else { Err(Error::Resonance { ratio: f64::INFINITY }) };
    }
    let ratio = 2.0 * beat / drive_frequency;
    let n = ratio.round();
    if !ratio.is_finite() || (ratio - n).abs() > 1e-9 * n.abs().max(1.0) {
        return Err(Error::Resonance { ratio });
    }
    Ok(n as i64)
}

/// C(ω) = ⟨c(ω+Ω) c(ω−Ω)†⟩ = Σ_j T_{0j}(ω+Ω) N T_{0,j+n}(ω−Ω)† with 2Ω = nω_d.
///
/// Index mapping: C(ω) = S^(−n)(ω+Ω) = [S^(n)(ω−Ω)]†.
pub fn heterodyne_cross(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    beat: f64,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    let nshift = heterodyne_index(beat, series.drive_frequency)?;
    check_component_index(series, k, nshift)?;
    let tpl = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let d = series.dim();
    let ki = k as i64;
    let values = grid
        .par_iter()
        .map(|&w| {
            let plus = tpl.factor(w + beat, k)?.row_blocks(0)?;
            let minus = tpl.factor(w - beat, k)?.row_blocks(0)?;
            let mut c = CMat::zeros(d, d);
            for j in -ki..=ki {
                let jn = j + nshift;
                if jn.abs() > ki {
                    continue;
                }
                c += &plus[(j + ki) as usize] * &n * minus[(jn + ki) as usize].adjoint();
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: nshift as i32,
        method: Method::Shifted,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, &format!("C(Omega={beat})")),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectionKind {
    Intracavity,
    OutputHomodyne,
    OutputHeterodyne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionSpec {
    pub mode: usize,
    pub phi: f64,
    pub beat: f64,
    pub kind: DetectionKind,
}

impl DetectionSpec {
    pub fn homodyne(mode: usize, phi: f64) -> Self {
        DetectionSpec { mode, phi, beat: 0.0, kind: DetectionKind::OutputHomodyne }
    }

    pub fn heterodyne(mode: usize, beat: f64) -> Self {
        DetectionSpec { mode, phi: 0.0, beat, kind: DetectionKind::OutputHeterodyne }
    }

    pub fn validate(&self, series: &HamiltonianFourierSeries) -> Result<()> {
        if self.mode >= series.n_modes {
            return Err(Error::Reference(format!("detected mode {} is not declared", self.mode)));
        }
        if self.kind != DetectionKind::Intracavity && !series.is_optical(self.mode) {
            return Err(Error::Contract(format!("detected mode {} is not optical", self.mode)));
        }
        if self.kind == DetectionKind::OutputHeterodyne {
            heterodyne_index(self.beat, series.drive_frequency)?;
        }
        Ok(())
    }
}

/// Output-field blocks T_out,{0l} = δ_{l0} E/√κ − √κ T_{0l}[pair rows], each 2 × 2n,
/// so that Σ_l T_out N T_out† is ⟨c_out c_out†⟩ for the detected pair.
pub fn output_transfer(
    fact: &TransferFactorization,
    noise: &NoiseModel,
    series: &HamiltonianFourierSeries,
    mode: usize,
) -> Result<Vec<CMat>> {
    if !series.is_optical(mode) {
        return Err(Error::Contract(format!("output fields are defined for optical modes only (mode {mode})")));
    }
    let row = fact.row_blocks(0)?;
    Ok(output_from_row(&row, noise, mode, fact.k))
}

fn output_from_row(row: &[CMat], noise: &NoiseModel, mode: usize, k: usize) -> Vec<CMat> {
    let kappa = noise.damping[2 * mode];
    let sk = kappa.sqrt();
    let r = 2 * mode;
    row.iter()
        .enumerate()
        .map(|(bl, t)| {
            let mut o = t.rows(r, 2).into_owned() * Complex64::new(-sk, 0.0);
            if bl == k {
                o[(0, r)] += Complex64::new(1.0 / sk, 0.0);
                o[(1, r + 1)] += Complex64::new(1.0 / sk, 0.0);
            }
            o
        })
        .collect()
}

fn output_matrix_at(
    tpl: &BlockTemplate,
    noise: &NoiseModel,
    n: &CMat,
    mode: usize,
    w: f64,
    k: usize,
) -> Result<(CMat, Vec<CMat>)> {
    let row = tpl.factor(w, k)?.row_blocks(0)?;
    let out = output_from_row(&row, noise, mode, k);
    let mut s = CMat::zeros(2, 2);
    for t in &out {
        sandwich(&mut s, t, n);
    }
    Ok((s, out))
}

/// 2 × 2 output-field spectra ⟨c_out c_out†⟩ of the detected pair.
pub fn output_spectrum(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    mode: usize,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    DetectionSpec::homodyne(mode, 0.0).validate(series)?;
    let tpl = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let values = grid
        .par_iter()
        .map(|&w| output_matrix_at(&tpl, noise, &n, mode, w, k).map(|x| x.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Shifted,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, &format!("S_out[{mode}]")),
    })
}

/// S_hom = ⟨a a†⟩ + ⟨a† a⟩ + e^{2iφ}⟨a a⟩ + e^{−2iφ}⟨a† a†⟩ of the output field.
pub fn homodyne_value(s_out: &CMat, phi: f64) -> f64 {
    pair_form(s_out, 0, phi)
}

pub fn homodyne_spectrum(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    detection: &DetectionSpec,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    if detection.kind != DetectionKind::OutputHomodyne {
        return Err(Error::Contract("homodyne spectrum needs output-homodyne detection".into()));
    }
    detection.validate(series)?;
    let out = output_spectrum(series, noise, detection.mode, grid, k)?;
    let phi = detection.phi;
    let mut res = out.project(&format!("S_hom(phi={phi})"), |s| homodyne_value(s, phi))?;
    res.meta.truncation = Some(k);
    Ok(res)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomodyneMap {
    pub phis: Vec<f64>,
    pub omega: Vec<f64>,
    /// values[i][j] = S_hom(φ_i, ω_j).
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomodyneExtremum {
    pub value: f64,
    pub phi: f64,
    pub omega: f64,
}

impl HomodyneMap {
    pub fn minimum(&self) -> HomodyneExtremum {
        let mut best = HomodyneExtremum { value: f64::INFINITY, phi: f64::NAN, omega: f64::NAN };
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v < best.value {
                    best = HomodyneExtremum { value: *v, phi: self.phis[i], omega: self.omega[j] };
                }
            }
        }
        best
    }

    /// Squeezing below the unit floor in dB (positive when squeezed).
    pub fn max_squeezing_db(&self) -> f64 {
        -10.0 * self.minimum().value.log10()
    }
}

pub fn homodyne_map(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    mode: usize,
    phis: &[f64],
    grid: &[f64],
    k: usize,
) -> Result<HomodyneMap> {
    let out = output_spectrum(series, noise, mode, grid, k)?;
    let m = out.matrices().unwrap();
    let values = phis.iter().map(|&phi| m.iter().map(|s| homodyne_value(s, phi)).collect()).collect();
    Ok(HomodyneMap { phis: phis.to_vec(), omega: grid.to_vec(), values })
}

/// Output-field heterodyne spectrum
/// S_out(ω+Ω)_{aa†} + S_out(ω−Ω)_{a†a} + 2 Re ⟨a_out(ω+Ω) a_out(ω−Ω)⟩.
pub fn heterodyne_spectrum(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    detection: &DetectionSpec,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    if detection.kind != DetectionKind::OutputHeterodyne {
        return Err(Error::Contract("heterodyne spectrum needs output-heterodyne detection".into()));
    }
    detection.validate(series)?;
    let nshift = heterodyne_index(detection.beat, series.drive_frequency)?;
    check_component_index(series, k, nshift)?;
    let tpl = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let beat = detection.beat;
    let ki = k as i64;
    let values = grid
        .par_iter()
        .map(|&w| {
            let (sp, op) = output_matrix_at(&tpl, noise, &n, detection.mode, w + beat, k)?;
            let (sm, om) = output_matrix_at(&tpl, noise, &n, detection.mode, w - beat, k)?;
            let mut c = CMat::zeros(2, 2);
            for j in -ki..=ki {
                let jn = j + nshift;
                if jn.abs() <= ki {
                    c += &op[(j + ki) as usize] * &n * om[(jn + ki) as usize].adjoint();
                }
            }
            Ok(sp[(0, 0)].re + sm[(1, 1)].re + 2.0 * c[(0, 1)].re)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Shifted,
        values: SpectrumValues::Scalar(values),
        stderr: None,
        meta: meta(series, noise, k, &format!("S_het(Omega={beat})")),
    })
}

/// Periodic input noise: component l carries correlation matrix N_l.
/// Method (i) sums Σ_m T_{0m} (Σ_l N_l) T_{0m}†.
pub fn spectrum_shifted_periodic(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    components: &[(i64, CMat)],
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    let tpl = BlockTemplate::new(series, noise)?;
    let d = series.dim();
    let total = components.iter().fold(CMat::zeros(d, d), |acc, (_, n)| acc + n);
    let values = grid.par_iter().map(|&w| shifted_at(&tpl.factor(w, k)?, &total)).collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Shifted,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, "S_cc(periodic noise)"),
    })
}

/// Method (ii) with periodic input noise:
/// Σ_{m,l} T_{−m,−l}(ω+mω_d) N_l T_{−m,−l}(ω+mω_d)†.
pub fn spectrum_floquet_periodic(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    components: &[(i64, CMat)],
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    let tpl = BlockTemplate::new(series, noise)?;
    let d = series.dim();
    let ki = k as i64;
    let wd = series.drive_frequency;
    for (l, _) in components {
        if l.abs() > ki {
            return Err(Error::Contract(format!("noise component {l} outside truncation K = {k}")));
        }
    }
    let values = grid
        .par_iter()
        .map(|&w| {
            let mut s = CMat::zeros(d, d);
            for m in -ki..=ki {
                let row = tpl.factor(w + m as f64 * wd, k)?.row_blocks(-m)?;
                for (l, nl) in components {
                    sandwich(&mut s, &row[(ki - l) as usize], nl);
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Floquet,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: meta(series, noise, k, "S_cc(periodic noise)"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakMeasurement {
    pub position: f64,
    pub height: f64,
    /// No interior local maximum (or height below the floor) in the window.
    pub suppressed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SidebandRatio {
    pub ratio: f64,
    pub upper: PeakMeasurement,
    pub lower: PeakMeasurement,
}

impl SidebandRatio {
    pub fn suppressed(&self) -> bool {
        self.upper.suppressed || self.lower.suppressed
    }
}

/// Grid with `points` samples in each ±ω_d/2 window around ω̄_M ± ω_d.
pub fn sideband_grid(omega_m: f64, omega_d: f64, points: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(2 * points);
    for centre in [omega_m - omega_d, omega_m + omega_d] {
        let lo = centre - omega_d / 2.0;
        let step = omega_d / (points - 1) as f64;
        g.extend((0..points).map(|i| lo + i as f64 * step));
    }
    g
}

/// Height of the tallest interior local maximum within [lo, hi], refined by a
/// parabola through the three surrounding samples.
pub fn measure_peak(omega: &[f64], values: &[f64], lo: f64, hi: f64, floor: f64) -> Result<PeakMeasurement> {
    let idx: Vec<usize> = (0..omega.len()).filter(|&i| omega[i] >= lo && omega[i] <= hi).collect();
    if idx.len() < 3 {
        return Err(Error::Resolution(format!("fewer than 3 grid points in peak window [{lo}, {hi}]")));
    }
    let mut best: Option<PeakMeasurement> = None;
    for w in idx.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        if b != a + 1 || c != b + 1 {
            continue;
        }
        let (ya, yb, yc) = (values[a], values[b], values[c]);
        if !(yb >= ya && yb > yc) {
            continue;
        }
        let (xa, xb, xc) = (omega[a], omega[b], omega[c]);
        let denom = (xa - xb) * (xa - xc) * (xb - xc);
        let ca = (xc * (yb - ya) + xb * (ya - yc) + xa * (yc - yb)) / denom;
        let cb = (xc * xc * (ya - yb) + xb * xb * (yc - ya) + xa * xa * (yb - yc)) / denom;
        let cc = (xb * xc * (xb - xc) * ya + xc * xa * (xc - xa) * yb + xa * xb * (xa - xb) * yc) / denom;
        let (pos, height) = if ca < 0.0 {
            let x = -cb / (2.0 * ca);
            (x, cc - cb * cb / (4.0 * ca))
        } else {
            (xb, yb)
        };
        if best.is_none_or(|p| height > p.height) {
            best = Some(PeakMeasurement { position: pos, height, suppressed: false });
        }
    }
    let peak = best.unwrap_or_else(|| {
        let i = idx.iter().copied().max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
        PeakMeasurement { position: omega[i], height: values[i], suppressed: true }
    });
    Ok(PeakMeasurement { suppressed: peak.suppressed || peak.height < floor, ..peak })
}

/// R = height(ω̄_M + ω_d peak) / height(ω̄_M − ω_d peak).
pub fn sideband_ratio(spec: &SpectrumResult, omega_m: f64, omega_d: f64) -> Result<SidebandRatio> {
    sideband_ratio_with_floor(spec, omega_m, omega_d, 0.0)
}

pub fn sideband_ratio_with_floor(
    spec: &SpectrumResult,
    omega_m: f64,
    omega_d: f64,
    floor: f64,
) -> Result<SidebandRatio> {
    let v =
        spec.scalars().ok_or_else(|| Error::Contract("sideband ratio needs a scalar spectrum projection".into()))?;
    let half = omega_d / 2.0;
    let upper = measure_peak(&spec.omega, v, omega_m + omega_d - half, omega_m + omega_d + half, floor)?;
    let lower = measure_peak(&spec.omega, v, omega_m - omega_d - half, omega_m - omega_d + half, floor)?;
    Ok(SidebandRatio { ratio: upper.height / lower.height, upper, lower })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolution {
    pub resolved: bool,
    pub margin: f64,
}

pub const RESOLUTION_THRESHOLD: f64 = 0.1;

/// Split sidebands are resolved when CΓ_M/(2ω_d) is below `threshold`.
pub fn resolution_check(cooperativity: f64, gamma_m: f64, omega_d: f64, threshold: f64) -> Resolution {
    let margin = cooperativity * gamma_m / (2.0 * omega_d);
    Resolution { resolved: margin < threshold, margin }
}

pub fn linear_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let step = (stop - start) / (points - 1) as f64;
    (0..points).map(|i| start + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::HybridTrap;
    use crate::model::{build_fourier_series, noise_matrix, CouplingSpec, ModeSpec};
    use crate::transfer::standard_spectrum_oracle;

    fn optical_only(detuning: f64, kappa: f64) -> (HamiltonianFourierSeries, NoiseModel) {
        let modes = vec![ModeSpec::optical("a", detuning, kappa, 0.0)];
        (build_fourier_series(&modes, &[], &[], 0.0).unwrap(), noise_matrix(&modes).unwrap())
    }

    fn chi_o(w: f64, detuning: f64, kappa: f64) -> Complex64 {
        Complex64::new(kappa / 2.0, -(w + detuning)).inv()
    }

    #[test]
    fn decoupled_cavity_is_lorentzian() {
        let (s, n) = optical_only(-0.3, 0.8);
        let grid = linear_grid(-1.0, 1.0, 41);
        let sp = spectrum_shifted(&s, &n, &grid, 0).unwrap();
        for (w, m) in grid.iter().zip(sp.matrices().unwrap()) {
            let want = 0.8 * chi_o(*w, -0.3, 0.8).norm_sqr();
            assert!((m[(0, 0)].re - want).abs() < 1e-13);
            assert_eq!(m[(1, 1)], Complex64::new(0.0, 0.0));
        }
        let peak = spectrum_shifted(&s, &n, &[0.3], 0).unwrap();
        assert!((peak.matrices().unwrap()[0][(0, 0)].re - 4.0 / 0.8).abs() < 1e-12);
    }

    #[test]
    fn shot_noise_floor_is_flat() {
        let (s, n) = optical_only(0.2, 1.0);
        let grid = linear_grid(-3.0, 3.0, 61);
        for phi in [0.0, 0.4, 1.3] {
            let h = homodyne_spectrum(&s, &n, &DetectionSpec::homodyne(0, phi), &grid, 0).unwrap();
            for v in h.scalars().unwrap() {
                assert!((v - 1.0).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn output_transfer_rejects_mechanics() {
        let p = HybridTrap::fig2a(0.5);
        let s = p.series().unwrap();
        let n = p.noise().unwrap();
        let tpl = BlockTemplate::new(&s, &n).unwrap();
        let f = tpl.factor(1.0, 2).unwrap();
        assert!(matches!(output_transfer(&f, &n, &s, 1), Err(Error::Contract(_))));
        assert_eq!(output_transfer(&f, &n, &s, 0).unwrap().len(), 5);
    }

    #[test]
    fn floquet_equals_shifted_without_modulation() {
        let modes = vec![ModeSpec::optical("a", -1.0, 1.0, 0.0), ModeSpec::mechanical("b", 1.0, 1e-3, 10.0)];
        let couplings = vec![CouplingSpec { first: 0, second: 1, g: 0.05 }];
        let s = build_fourier_series(&modes, &couplings, &[], 0.05).unwrap();
        let n = noise_matrix(&modes).unwrap();
        let grid = linear_grid(0.8, 1.2, 101);
        let a = spectrum_shifted(&s, &n, &grid, 3).unwrap();
        let b = spectrum_floquet(&s, &n, &grid, 3).unwrap();
        let o = standard_spectrum_oracle(&s, &n, &grid).unwrap();
        assert!(a.max_relative_deviation(&b).unwrap() < 1e-14);
        assert!(a.max_relative_deviation(&o).unwrap() < 1e-12);
        let c1 = spectral_component(&s, &n, &grid, 3, 1).unwrap();
        assert!(c1.matrices().unwrap().iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn floquet_reuses_commensurate_points() {
        let p = HybridTrap::fig2a(0.2);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let grid = linear_grid(0.9, 1.1, 41);
        let a = spectrum_shifted(&s, &n, &grid, 12).unwrap();
        let b = spectrum_floquet(&s, &n, &grid, 12).unwrap();
        assert!(a.max_relative_deviation(&b).unwrap() < 1e-9);
    }

    #[test]
    fn component_zero_is_the_spectrum() {
        let p = HybridTrap::fig2a(0.5);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let grid = linear_grid(0.95, 1.05, 11);
        let a = spectrum_shifted(&s, &n, &grid, 8).unwrap();
        let c = spectral_component(&s, &n, &grid, 8, 0).unwrap();
        assert_eq!(a.values, c.values);
        assert!(spectral_component(&s, &n, &grid, 8, 7).is_err());
    }

    #[test]
    fn heterodyne_rejects_off_resonant_beat() {
        let p = HybridTrap::fig2a(0.5);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let err = heterodyne_cross(&s, &n, 0.37 * 0.05, &[1.0], 8).unwrap_err();
        assert!(matches!(err, Error::Resonance { .. }));
        assert_eq!(heterodyne_index(0.025, 0.05).unwrap(), 1);
        assert_eq!(heterodyne_index(-0.05, 0.05).unwrap(), -2);
    }

    #[test]
    fn sideband_ratio_on_synthetic_peaks() {
        let lor = |w: f64, c: f64, h: f64| h / (1.0 + ((w - c) / 0.002).powi(2));
        let grid = linear_grid(0.9, 1.1, 2001);
        let vals: Vec<f64> = grid.iter().map(|&w| lor(w, 1.05, 0.3) + lor(w, 0.95, 1.2)).collect();
        let spec = SpectrumResult {
            omega: grid,
            m: 0,
            method: Method::Oracle,
            values: SpectrumValues::Scalar(vals),
            stderr: None,
            meta: SpectrumMeta::default(),
        };
        let r = sideband_ratio(&spec, 1.0, 0.05).unwrap();
        assert!((r.ratio - 0.25).abs() < 1e-3, "{r:?}");
        assert!(!r.suppressed());
        assert!((r.upper.position - 1.05).abs() < 1e-4);
        let r = sideband_ratio_with_floor(&spec, 1.0, 0.05, 0.5).unwrap();
        assert!(r.upper.suppressed && !r.lower.suppressed);
    }

    #[test]
    fn monotone_window_is_flagged() {
        let grid = linear_grid(0.9, 1.1, 401);
        let vals: Vec<f64> = grid.iter().map(|&w| 1.0 / (1.0 + ((w - 0.95) / 0.002).powi(2))).collect();
        let spec = SpectrumResult {
            omega: grid,
            m: 0,
            method: Method::Oracle,
            values: SpectrumValues::Scalar(vals),
            stderr: None,
            meta: SpectrumMeta::default(),
        };
        let r = sideband_ratio(&spec, 1.0, 0.05).unwrap();
        assert!(r.upper.suppressed);
        assert!(r.ratio < 1e-2);
    }

    #[test]
    fn resolution_margins() {
        let c = 0.01 * 2.0 * 0.05 / 2.3e-5;
        let r = resolution_check(c, 2.3e-5, 0.05, RESOLUTION_THRESHOLD);
        assert!(r.resolved && (r.margin - 0.01).abs() < 1e-12);
        let c = 2.0 * 0.05 / 2.3e-5;
        assert!(!resolution_check(c, 2.3e-5, 0.05, RESOLUTION_THRESHOLD).resolved);
    }

    #[test]
    fn auto_truncation_converges() {
        let p = HybridTrap::fig2a(0.9);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let grid = linear_grid(0.94, 1.06, 13);
        let (_, rep) = spectrum_shifted_auto(&s, &n, &grid, AutoTruncation::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.k >= 16);
    }
}
