//! Semiclassical Langevin simulator.
//!
//! Every operator is replaced by a complex amplitude, so the state vector
//! c = (a_1, a_1*, …) obeys
//!
//! ```text
//! dc = [−iσH(t) − γ/2] c dt + dW,   E[dW_i dW_i*] = γ_i (n̄_i + ½) · scale · dt
//! ```
//!
//! with dW circular Gaussian and the conjugate entry carrying the conjugate
//! increment. One step is c ← F c + G ξ, where F = exp(D(t + dt/2) dt) is the
//! exact propagator of the drift frozen at the middle of the step and
//! G = exp(D(t + dt/2) dt/2) moves the increment to the same time. The step is
//! chosen so that one drive period is an integer number of steps, which lets
//! the propagators of one period be computed once and reused.
//!
//! Trajectory dump layout (little endian):
//!
//! ```text
//! 8  bytes  magic "MODSPTRJ"
//! 4  bytes  u32 format version (1)
//! 4  bytes  u32 number of observables M
//! 8  bytes  u64 number of samples N
//! 8  bytes  f64 dt
//! 8  bytes  f64 time of the first sample
//! M × (u32 label length + UTF-8 label)
//! N × f64 time column
//! M × N × (f64 re, f64 im) observable columns
//! ```

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CMat, HamiltonianFourierSeries, NoiseModel, SymplecticForm};
use crate::psd::{PsdAccumulator, Welch, WelchConfig};
use crate::spectra::{quadrature_value, spectrum_shifted, Method, SpectrumMeta, SpectrumResult, SpectrumValues};

pub const DEFAULT_DT: f64 = 0.02;

/// Scale applied to the increment variance γ(n̄ + ½)dt. With this value the
/// simulated spectra carry the same normalisation as the analytic ones built
/// from the symmetrised noise matrix.
pub const NOISE_CALIBRATION: f64 = 1.0;

/// Largest accepted dt · max(|frequency|, damping).
pub const RESOLUTION_GUARD: f64 = 0.1;

/// Beyond this many steps per period the propagators are built on the fly.
const MAX_CACHED_STEPS: usize = 1 << 18;

const STABILITY_CHECK_EVERY: usize = 4096;

const MAGIC: &[u8; 8] = b"MODSPTRJ";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    /// The amplitude c_{2m} of mode m.
    Field(usize),
    /// (e^{iφ}a + e^{−iφ}a*)/√2 of mode m; φ = 0 gives x (or y) of the paper's
    /// notation for the mechanical (optical) mode.
    Quadrature { mode: usize, phi: f64 },
}

impl Observable {
    pub fn position(mode: usize) -> Self {
        Observable::Quadrature { mode, phi: 0.0 }
    }

    pub fn mode(&self) -> usize {
        match self {
            Observable::Field(m) | Observable::Quadrature { mode: m, .. } => *m,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Observable::Field(m) => format!("c[{m}]"),
            Observable::Quadrature { mode, phi } => format!("X[{mode}](phi={phi})"),
        }
    }

    pub fn sample(&self, c: &[Complex64]) -> Complex64 {
        match *self {
            Observable::Field(m) => c[2 * m],
            Observable::Quadrature { mode, phi } => {
                let e = Complex64::from_polar(FRAC_1_SQRT_2, phi);
                e * c[2 * mode] + e.conj() * c[2 * mode + 1]
            }
        }
    }

    /// The analytic counterpart: ⟨O O*⟩ read off a spectral matrix.
    pub fn project(&self, s: &CMat) -> f64 {
        match *self {
            Observable::Field(m) => s[(2 * m, 2 * m)].re,
            Observable::Quadrature { mode, phi } => quadrature_value(s, mode, phi),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdeConfig {
    /// Requested step; rounded down so a drive period holds whole steps.
    pub dt: f64,
    /// Recorded time per ensemble member, after burn-in.
    pub t_sim: f64,
    pub burn_in: f64,
    pub ensemble: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub observables: Vec<Observable>,
    /// Initial amplitude a_j(0) of every mode; zero when absent.
    pub initial: Option<Vec<Complex64>>,
}

impl SdeConfig {
    pub fn new(t_sim: f64, observables: Vec<Observable>) -> Self {
        SdeConfig {
            dt: DEFAULT_DT,
            t_sim,
            burn_in: 0.0,
            ensemble: 1,
            seed: 0,
            noise_scale: NOISE_CALIBRATION,
            observables,
            initial: None,
        }
    }

    pub fn validate(&self, series: &HamiltonianFourierSeries, noise: &NoiseModel) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.dt) {
            return Err(Error::validation("sde.dt", "must be finite and > 0"));
        }
        if !pos(self.t_sim) {
            return Err(Error::validation("sde.t_sim", "must be finite and > 0"));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(Error::validation("sde.burn_in", "must be finite and >= 0"));
        }
        if self.ensemble == 0 {
            return Err(Error::validation("sde.ensemble", "must be at least 1"));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::validation("sde.noise_scale", "must be finite and >= 0"));
        }
        if self.observables.is_empty() {
            return Err(Error::validation("sde.observables", "at least one observable is required"));
        }
        if let Some(o) = self.observables.iter().find(|o| o.mode() >= series.n_modes) {
            return Err(Error::validation("sde.observables", format!("mode {} does not exist", o.mode())));
        }
        if let Some(init) = &self.initial {
            if init.len() != series.n_modes {
                return Err(Error::validation(
                    "sde.initial",
                    format!("expected {} amplitudes, got {}", series.n_modes, init.len()),
                ));
            }
        }
        if noise.dim() != series.dim() {
            return Err(Error::Contract("noise model and Hamiltonian have different dimensions".into()));
        }
        let rate = fastest_rate(series, noise);
        if self.dt * rate >= RESOLUTION_GUARD {
            return Err(Error::validation(
                "sde.dt",
                format!("dt·max(|ω|, γ) = {:.3} must stay below {RESOLUTION_GUARD}", self.dt * rate),
            ));
        }
        Ok(())
    }
}

fn fastest_rate(series: &HamiltonianFourierSeries, noise: &NoiseModel) -> f64 {
    let h = series.static_part().at_time(0.0);
    let freq = (0..series.dim()).map(|i| h[(i, i)].norm()).fold(0.0, f64::max);
    noise.damping.iter().copied().fold(freq, f64::max)
}

/// Step actually used for a requested dt: the drive period divided into
/// ceil(period/dt) equal steps.
pub fn effective_step(series: &HamiltonianFourierSeries, dt: f64) -> (f64, usize) {
    if !series.is_modulated() {
        return (dt, 1);
    }
    let period = 2.0 * std::f64::consts::PI / series.drive_frequency;
    let steps = (period / dt).ceil().max(1.0) as usize;
    (period / steps as f64, steps)
}

fn flatten(m: &CMat) -> Vec<Complex64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn mat_vec(m: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * d..(i + 1) * d];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Drift propagators for one drive period.
pub struct Propagators {
    pub dt: f64,
    pub steps_per_period: usize,
    dim: usize,
    series: HamiltonianFourierSeries,
    damping: Vec<f64>,
    cache: Option<Vec<(Vec<Complex64>, Vec<Complex64>)>>,
    /// Standard deviation of the complex increment of every mode.
    noise_sd: Vec<f64>,
}

impl Propagators {
    pub fn new(series: &HamiltonianFourierSeries, noise: &NoiseModel, dt: f64, scale: f64) -> Self {
        let (dt, steps) = effective_step(series, dt);
        let noise_sd = (0..series.n_modes)
            .map(|j| (noise.damping[2 * j] * (noise.occupation[j] + 0.5) * scale * dt).sqrt())
            .collect();
        let mut p = Propagators {
            dt,
            steps_per_period: steps,
            dim: series.dim(),
            series: series.clone(),
            damping: noise.damping.clone(),
            cache: None,
            noise_sd,
        };
        if steps <= MAX_CACHED_STEPS {
            p.cache = Some((0..steps).into_par_iter().map(|s| p.build(s)).collect());
        }
        p
    }

    fn drift_at(&self, t: f64) -> CMat {
        let sigma = SymplecticForm::new(self.series.n_modes);
        let mut d = sigma.apply(&self.series.at_time(t)) * Complex64::new(0.0, -1.0);
        for i in 0..self.dim {
            d[(i, i)] -= Complex64::new(self.damping[i] / 2.0, 0.0);
        }
        d
    }

    fn build(&self, phase_step: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let d = self.drift_at((phase_step as f64 + 0.5) * self.dt);
        let full = (&d * Complex64::new(self.dt, 0.0)).exp();
        let half = (&d * Complex64::new(self.dt / 2.0, 0.0)).exp();
        (flatten(&full), flatten(&half))
    }

    /// Monodromy matrix over one period (or one step when unmodulated).
    pub fn monodromy(&self) -> CMat {
        let mut m = CMat::identity(self.dim, self.dim);
        for s in 0..self.steps_per_period {
            let (f, _) = self.build(s);
            m = CMat::from_row_slice(self.dim, self.dim, &f) * m;
        }
        m
    }
}

struct Stepper<'a> {
    prop: &'a Propagators,
    c: Vec<Complex64>,
    next: Vec<Complex64>,
    kick: Vec<Complex64>,
    rng: ChaCha8Rng,
    step: usize,
    bound: f64,
}

impl<'a> Stepper<'a> {
    fn new(prop: &'a Propagators, sde: &SdeConfig, member: u64) -> Self {
        let dim = prop.dim;
        let mut c = vec![Complex64::new(0.0, 0.0); dim];
        if let Some(init) = &sde.initial {
            for (j, a) in init.iter().enumerate() {
                c[2 * j] = *a;
                c[2 * j + 1] = a.conj();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sde.seed);
        rng.set_stream(member);
        let stationary: f64 =
            prop.noise_sd.iter().enumerate().map(|(j, sd)| sd * sd / (prop.dt * prop.damping[2 * j])).sum();
        let start: f64 = c.iter().map(|x| x.norm_sqr()).sum();
        let bound = 1e8 * (1.0 + stationary + start);
        Stepper {
            prop,
            c,
            next: vec![Complex64::new(0.0, 0.0); dim],
            kick: vec![Complex64::new(0.0, 0.0); dim],
            rng,
            step: 0,
            bound,
        }
    }

    fn time(&self) -> f64 {
        self.step as f64 * self.prop.dt
    }

    fn advance(&mut self) -> Result<()> {
        let phase = self.step % self.prop.steps_per_period;
        let built;
        let (full, half) = match &self.prop.cache {
            Some(cache) => (&cache[phase].0, &cache[phase].1),
            None => {
                built = self.prop.build(phase);
                (&built.0, &built.1)
            }
        };
        mat_vec(full, &self.c, &mut self.next);
        let mut noisy = false;
        for (j, sd) in self.prop.noise_sd.iter().enumerate() {
            let z = if *sd > 0.0 {
                noisy = true;
                let re: f64 = self.rng.sample(StandardNormal);
                let im: f64 = self.rng.sample(StandardNormal);
                Complex64::new(re, im) * (sd * FRAC_1_SQRT_2)
            } else {
                Complex64::new(0.0, 0.0)
            };
            self.kick[2 * j] = z;
            self.kick[2 * j + 1] = z.conj();
        }
        if noisy {
            let kick = self.kick.clone();
            mat_vec(half, &kick, &mut self.kick);
            for (n, k) in self.next.iter_mut().zip(&self.kick) {
                *n += k;
            }
        }
        std::mem::swap(&mut self.c, &mut self.next);
        self.step += 1;
        if self.step.is_multiple_of(STABILITY_CHECK_EVERY) {
            self.check()?;
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let norm: f64 = self.c.iter().map(|x| x.norm_sqr()).sum();
        if !norm.is_finite() || norm > self.bound {
            return Err(Error::Unstable { step: self.step, norm: norm.sqrt() });
        }
        Ok(())
    }

    fn burn(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.advance()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub labels: Vec<String>,
    /// One column per observable.
    pub columns: Vec<Vec<Complex64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        for l in &self.labels {
            w.write_all(&(l.len() as u32).to_le_bytes())?;
            w.write_all(l.as_bytes())?;
        }
        for i in 0..self.len() {
            w.write_all(&self.time(i).to_le_bytes())?;
        }
        for col in &self.columns {
            for x in col {
                w.write_all(&x.re.to_le_bytes())?;
                w.write_all(&x.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Trajectory> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Io("not a trajectory dump (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Io(format!("unsupported trajectory format version {version}")));
        }
        let m = read_u32(r)? as usize;
        let n = read_u64(r)? as usize;
        let dt = read_f64(r)?;
        let t0 = read_f64(r)?;
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let len = read_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            labels.push(String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?);
        }
        for _ in 0..n {
            read_f64(r)?;
        }
        let mut columns = Vec::with_capacity(m);
        for _ in 0..m {
            let mut col = Vec::with_capacity(n);
            for _ in 0..n {
                let re = read_f64(r)?;
                let im = read_f64(r)?;
                col.push(Complex64::new(re, im));
            }
            columns.push(col);
        }
        Ok(Trajectory { dt, t0, labels, columns })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn steps_for(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Integrates ensemble member 0 and records the configured observables after
/// the burn-in.
pub fn integrate(series: &HamiltonianFourierSeries, noise: &NoiseModel, sde: &SdeConfig) -> Result<Trajectory> {
    integrate_member(series, noise, sde, 0)
}

pub fn integrate_member(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    sde: &SdeConfig,
    member: u64,
) -> Result<Trajectory> {
    sde.validate(series, noise)?;
    let prop = Propagators::new(series, noise, sde.dt, sde.noise_scale);
    let mut st = Stepper::new(&prop, sde, member);
    st.burn(steps_for(sde.burn_in, prop.dt))?;
    let t0 = st.time();
    let n = steps_for(sde.t_sim, prop.dt);
    let mut columns = vec![Vec::with_capacity(n + 1); sde.observables.len()];
    for i in 0..=n {
        if i > 0 {
            st.advance()?;
        }
        for (col, o) in columns.iter_mut().zip(&sde.observables) {
            col.push(o.sample(&st.c));
        }
    }
    st.check()?;
    Ok(Trajectory { dt: prop.dt, t0, labels: sde.observables.iter().map(Observable::label).collect(), columns })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservablePsd {
    pub label: String,
    pub observable: Option<Observable>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Welch estimates averaged over an ensemble of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct LangevinEnsemble {
    pub omega: Vec<f64>,
    pub dt: f64,
    pub bin_width: f64,
    pub members: usize,
    pub segments: usize,
    pub observables: Vec<ObservablePsd>,
}

impl LangevinEnsemble {
    fn from_accumulators(
        welch: &Welch,
        dt: f64,
        members: usize,
        labels: Vec<(String, Option<Observable>)>,
        acc: Vec<PsdAccumulator>,
    ) -> Self {
        let segments = acc.first().map_or(0, |a| a.segments);
        let observables = labels
            .into_iter()
            .zip(acc)
            .map(|((label, observable), a)| ObservablePsd { label, observable, mean: a.mean(), stderr: a.stderr() })
            .collect();
        LangevinEnsemble {
            omega: welch.omega().to_vec(),
            dt,
            bin_width: welch.bin_width(),
            members,
            segments,
            observables,
        }
    }

    pub fn spectrum(&self, index: usize) -> Result<SpectrumResult> {
        let o =
            self.observables.get(index).ok_or_else(|| Error::Contract(format!("no observable with index {index}")))?;
        Ok(SpectrumResult {
            omega: self.omega.clone(),
            m: 0,
            method: Method::Stochastic,
            values: SpectrumValues::Scalar(o.mean.clone()),
            stderr: Some(o.stderr.clone()),
            meta: SpectrumMeta { truncation: None, params_hash: String::new(), label: o.label.clone() },
        })
    }
}

fn check_resolution(welch: &Welch, series: &HamiltonianFourierSeries) -> Result<()> {
    if series.is_modulated() && welch.bin_width() > series.drive_frequency / 10.0 {
        return Err(Error::Resolution(format!(
            "frequency bin {:.3e} is coarser than omega_d/10 = {:.3e}; use a longer segment",
            welch.bin_width(),
            series.drive_frequency / 10.0
        )));
    }
    Ok(())
}

/// Welch estimate from a recorded trajectory.
pub fn estimate_psd(traj: &Trajectory, cfg: WelchConfig) -> Result<LangevinEnsemble> {
    let welch = Welch::new(cfg, traj.dt)?;
    let mut acc = Vec::with_capacity(traj.columns.len());
    for col in &traj.columns {
        let mut a = welch.empty();
        welch.accumulate(&mut a, col)?;
        acc.push(a);
    }
    let labels = traj.labels.iter().map(|l| (l.clone(), None)).collect();
    Ok(LangevinEnsemble::from_accumulators(&welch, traj.dt, 1, labels, acc))
}

/// Runs the ensemble and streams 50%-overlapping Welch segments out of every
/// member without keeping whole trajectories. Members run in parallel with
/// their own RNG streams and are reduced in member order.
pub fn simulate_psd(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    sde: &SdeConfig,
    cfg: WelchConfig,
) -> Result<LangevinEnsemble> {
    sde.validate(series, noise)?;
    let prop = Propagators::new(series, noise, sde.dt, sde.noise_scale);
    let welch = Welch::new(cfg, prop.dt)?;
    check_resolution(&welch, series)?;
    let samples = steps_for(sde.t_sim, prop.dt);
    if welch.segment_count(samples) == 0 {
        return Err(Error::Resolution(format!(
            "t_sim = {} gives {samples} samples per member, fewer than one segment ({})",
            sde.t_sim, cfg.segment_len
        )));
    }
    let members: Vec<Vec<PsdAccumulator>> = (0..sde.ensemble as u64)
        .into_par_iter()
        .map(|m| stream_member(&prop, &welch, sde, m, samples))
        .collect::<Result<_>>()?;
    let mut total: Vec<PsdAccumulator> = sde.observables.iter().map(|_| welch.empty()).collect();
    for accs in &members {
        for (t, a) in total.iter_mut().zip(accs) {
            t.merge(a);
        }
    }
    let labels = sde.observables.iter().map(|o| (o.label(), Some(*o))).collect();
    Ok(LangevinEnsemble::from_accumulators(&welch, prop.dt, sde.ensemble, labels, total))
}

fn stream_member(
    prop: &Propagators,
    welch: &Welch,
    sde: &SdeConfig,
    member: u64,
    samples: usize,
) -> Result<Vec<PsdAccumulator>> {
    let l = cfg_len(welch);
    let hop = l / 2;
    let mut st = Stepper::new(prop, sde, member);
    st.burn(steps_for(sde.burn_in, prop.dt))?;
    let mut bufs = vec![vec![Complex64::new(0.0, 0.0); l]; sde.observables.len()];
    let mut acc: Vec<PsdAccumulator> = sde.observables.iter().map(|_| welch.empty()).collect();
    let record = |st: &Stepper, bufs: &mut [Vec<Complex64>], at: usize| {
        for (b, o) in bufs.iter_mut().zip(&sde.observables) {
            b[at] = o.sample(&st.c);
        }
    };
    for i in 0..l {
        if i > 0 {
            st.advance()?;
        }
        record(&st, &mut bufs, i);
    }
    for (a, b) in acc.iter_mut().zip(&bufs) {
        welch.accumulate(a, b)?;
    }
    for _ in 1..welch.segment_count(samples) {
        for b in bufs.iter_mut() {
            b.copy_within(hop.., 0);
        }
        for i in l - hop..l {
            st.advance()?;
            record(&st, &mut bufs, i);
        }
        for (a, b) in acc.iter_mut().zip(&bufs) {
            welch.accumulate(a, b)?;
        }
    }
    st.check()?;
    Ok(acc)
}

fn cfg_len(welch: &Welch) -> usize {
    welch.window().len()
}

/// Analytic spectrum with the symmetrised noise matrix γ(n̄ + ½), the target
/// the simulator estimates.
pub fn semiclassical_analytic(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    grid: &[f64],
    k: usize,
) -> Result<SpectrumResult> {
    let mut s = spectrum_shifted(series, &noise.semiclassical(), grid, k)?;
    s.meta.label = "S_cc(semiclassical)".into();
    Ok(s)
}

/// Expected Welch estimate of `observable`: the semiclassical spectrum seen
/// through the window kernel of `welch`.
pub fn expected_psd(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    welch: &Welch,
    observable: Observable,
    k: usize,
) -> Result<Vec<f64>> {
    let (nu, step) = welch.expectation_grid(48, 16);
    let s = semiclassical_analytic(series, noise, &nu, k)?;
    let values: Vec<f64> = s.matrices().unwrap_or_default().iter().map(|m| observable.project(m)).collect();
    Ok(welch.expected(&values, &nu, step))
}

/// Split-sideband ratio read from binned spectra, with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinnedRatio {
    pub ratio: f64,
    pub stderr: f64,
    pub upper_bin: usize,
    pub lower_bin: usize,
}

/// Bins of the tallest `reference` value within ±ω_d/2 of ω̄_M + ω_d and of
/// ω̄_M − ω_d. Locating the peaks on a noiseless reference keeps the noisy
/// estimate from selecting its own upward fluctuations.
pub fn sideband_bins(omega: &[f64], reference: &[f64], omega_m: f64, omega_d: f64) -> Result<(usize, usize)> {
    let pick = |centre: f64| {
        (0..omega.len())
            .filter(|&i| (omega[i] - centre).abs() <= omega_d / 2.0)
            .max_by(|&i, &j| reference[i].total_cmp(&reference[j]))
            .ok_or_else(|| Error::Resolution(format!("no frequency bin within ω_d/2 of {centre}")))
    };
    Ok((pick(omega_m + omega_d)?, pick(omega_m - omega_d)?))
}

/// R = upper/lower at the given bins; the error propagates the per-bin
/// standard errors (zero when none are supplied).
pub fn binned_ratio(values: &[f64], stderr: Option<&[f64]>, bins: (usize, usize)) -> BinnedRatio {
    let (u, l) = (values[bins.0], values[bins.1]);
    let ratio = u / l;
    let err = stderr.map_or(0.0, |se| ratio * ((se[bins.0] / u).powi(2) + (se[bins.1] / l).powi(2)).sqrt());
    BinnedRatio { ratio, stderr: err, upper_bin: bins.0, lower_bin: bins.1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fourier_series, noise_matrix, ModeSpec};

    fn single(mode: ModeSpec) -> (HamiltonianFourierSeries, NoiseModel) {
        let modes = vec![mode];
        (build_fourier_series(&modes, &[], &[], 0.0).unwrap(), noise_matrix(&modes).unwrap())
    }

    #[test]
    fn noiseless_cavity_decays_in_closed_form() {
        let (delta, kappa) = (0.7, 1.0);
        let (series, noise) = single(ModeSpec::optical("a", delta, kappa, 0.0));
        let mut sde = SdeConfig::new(10.0 / kappa, vec![Observable::Field(0)]);
        sde.noise_scale = 0.0;
        sde.initial = Some(vec![Complex64::new(1.0, 0.0)]);
        let traj = integrate(&series, &noise, &sde).unwrap();
        for (i, a) in traj.columns[0].iter().enumerate() {
            let t = traj.time(i);
            let want = (Complex64::new(-kappa / 2.0, delta) * t).exp();
            assert!((a - want).norm() < 1e-8, "t = {t}: {a} vs {want}");
        }
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let (series, noise) = single(ModeSpec::mechanical("b", 1.0, 0.05, 3.0));
        let mut sde = SdeConfig::new(40.0, vec![Observable::Field(0), Observable::position(0)]);
        sde.seed = 11;
        let a = integrate_member(&series, &noise, &sde, 3).unwrap();
        let b = integrate_member(&series, &noise, &sde, 3).unwrap();
        assert_eq!(a, b);
        let c = integrate_member(&series, &noise, &sde, 4).unwrap();
        assert_ne!(a.columns[0], c.columns[0]);
    }

    #[test]
    fn quadrature_samples_are_real() {
        let (series, noise) = single(ModeSpec::mechanical("b", 1.0, 0.05, 3.0));
        let sde = SdeConfig::new(20.0, vec![Observable::Quadrature { mode: 0, phi: 0.3 }]);
        let traj = integrate(&series, &noise, &sde).unwrap();
        assert!(traj.columns[0].iter().all(|x| x.im.abs() < 1e-12 * (1.0 + x.re.abs())));
    }

    #[test]
    fn thermal_variance_matches_fluctuation_dissipation() {
        let (nbar, gamma) = (2.0, 0.2);
        let (series, noise) = single(ModeSpec::mechanical("b", 1.0, gamma, nbar));
        let mut sde = SdeConfig::new(4000.0, vec![Observable::Field(0)]);
        sde.burn_in = 50.0;
        sde.ensemble = 8;
        let trajs: Vec<Trajectory> = (0..8).map(|m| integrate_member(&series, &noise, &sde, m).unwrap()).collect();
        let samples: Vec<f64> = trajs.iter().flat_map(|t| t.columns[0].iter().map(|x| x.norm_sqr())).collect();
        let var = samples.iter().sum::<f64>() / samples.len() as f64;
        // Correlation time 1/γ = 5 → about 8·4000/10 effectively independent samples.
        let want = nbar + 0.5;
        assert!((var - want).abs() / want < 0.05, "{var} vs {want}");
    }

    #[test]
    fn cavity_psd_is_the_expected_lorentzian() {
        let (delta, kappa, nbar) = (-0.5, 1.0, 0.0);
        let (series, noise) = single(ModeSpec::optical("a", delta, kappa, nbar));
        let cfg = WelchConfig { segment_len: 256, band: (-3.0, 3.0) };
        let mut sde = SdeConfig::new(256.0 * 0.02 * 500.0, vec![Observable::Field(0)]);
        sde.burn_in = 20.0;
        sde.ensemble = 8;
        sde.seed = 5;
        let ens = simulate_psd(&series, &noise, &sde, cfg).unwrap();
        assert!(ens.segments >= 100);
        let welch = Welch::new(cfg, ens.dt).unwrap();
        let want = expected_psd(&series, &noise, &welch, Observable::Field(0), 0).unwrap();
        let got = &ens.observables[0].mean;
        let peak = want.iter().enumerate().fold(0, |b, (i, v)| if *v > want[b] { i } else { b });
        assert!((ens.omega[peak] - 0.5).abs() <= ens.bin_width);
        let rel = (got[peak] - want[peak]).abs() / want[peak];
        assert!(rel < 0.05, "peak {} vs {}", got[peak], want[peak]);
        let se = &ens.observables[0].stderr;
        let inside = (0..got.len()).filter(|&i| (got[i] - want[i]).abs() < 3.0 * se[i]).count();
        assert!(inside as f64 >= 0.95 * got.len() as f64, "{inside}/{}", got.len());
    }

    #[test]
    fn propagators_cover_whole_periods() {
        let modes = vec![ModeSpec::mechanical("b", 1.0, 0.01, 0.0)];
        let mods = vec![crate::model::ModulationSpec::cosine(crate::model::ModulationTarget::Frequency(0), 2, 0.01)];
        let series = build_fourier_series(&modes, &[], &mods, 0.05).unwrap();
        let (dt, steps) = effective_step(&series, 0.02);
        assert!(dt <= 0.02);
        assert!((dt * steps as f64 - 2.0 * std::f64::consts::PI / 0.05).abs() < 1e-9);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let (series, noise) = single(ModeSpec::mechanical("b", 10.0, 0.1, 0.0));
        let sde = SdeConfig::new(10.0, vec![Observable::Field(0)]);
        assert!(matches!(sde.validate(&series, &noise), Err(Error::Validation { .. })));
    }

    #[test]
    fn growth_is_reported_as_instability() {
        let (series, mut noise) = single(ModeSpec::mechanical("b", 0.0, 0.1, 0.0));
        // Negative damping on purpose: the state grows as e^{t/2}.
        noise.damping = vec![-1.0, -1.0];
        let mut sde = SdeConfig::new(500.0, vec![Observable::Field(0)]);
        sde.noise_scale = 0.0;
        sde.initial = Some(vec![Complex64::new(1.0, 0.0)]);
        let err = integrate(&series, &noise, &sde).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }), "{err}");
    }

    #[test]
    fn dump_round_trips() {
        let (series, noise) = single(ModeSpec::mechanical("b", 1.0, 0.05, 1.0));
        let sde = SdeConfig::new(5.0, vec![Observable::Field(0), Observable::position(0)]);
        let traj = integrate(&series, &noise, &sde).unwrap();
        let mut bytes = Vec::new();
        traj.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"MODSPTRJ");
        let back = Trajectory::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, traj);
        bytes[0] = b'X';
        assert!(Trajectory::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn too_short_trajectory_is_a_resolution_error() {
        let (series, noise) = single(ModeSpec::mechanical("b", 1.0, 0.05, 1.0));
        let sde = SdeConfig::new(1.0, vec![Observable::Field(0)]);
        let traj = integrate(&series, &noise, &sde).unwrap();
        let cfg = WelchConfig { segment_len: 1024, band: (0.0, 2.0) };
        assert!(matches!(estimate_psd(&traj, cfg), Err(Error::Resolution(_))));
        assert!(matches!(simulate_psd(&series, &noise, &sde, cfg), Err(Error::Resolution(_))));
    }
}
