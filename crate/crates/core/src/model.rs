use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

const CONJ_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModeKind {
    Optical,
    Mechanical,
}

/// One bosonic mode and its bath.
///
/// `frequency` is the detuning Δ̄ for optical modes (entering as −Δ̄ a†a) and
/// the mean frequency ω̄_M for mechanical modes (entering as +ω̄_M b†b).
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    pub name: String,
    pub kind: ModeKind,
    pub frequency: f64,
    pub damping: f64,
    pub occupation: f64,
}

impl ModeSpec {
    pub fn optical(name: &str, detuning: f64, kappa: f64, occupation: f64) -> Self {
        ModeSpec { name: name.to_string(), kind: ModeKind::Optical, frequency: detuning, damping: kappa, occupation }
    }

    pub fn mechanical(name: &str, omega_m: f64, gamma: f64, occupation: f64) -> Self {
        ModeSpec { name: name.to_string(), kind: ModeKind::Mechanical, frequency: omega_m, damping: gamma, occupation }
    }

    /// Sign with which `frequency` enters the diagonal of H.
    fn diagonal_sign(&self) -> f64 {
        match self.kind {
            ModeKind::Optical => -1.0,
            ModeKind::Mechanical => 1.0,
        }
    }
}

/// Static position–position coupling `g (c_i + c_i†)(c_j + c_j†)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSpec {
    pub first: usize,
    pub second: usize,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModulationTarget {
    /// Index into the coupling list; modulates g.
    Coupling(usize),
    /// Index into the mode list; modulates Δ (optical) or ω_M (mechanical).
    Frequency(usize),
}

/// Periodic modulation `p(t) = p̄ + Σ_k c_k e^{ikω_d t}` of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationSpec {
    pub target: ModulationTarget,
    pub harmonics: Vec<(i32, Complex64)>,
}

impl ModulationSpec {
    /// `2 a sin(ω_d t)`.
    pub fn sine(target: ModulationTarget, harmonic: i32, amplitude: f64) -> Self {
        let c = Complex64::new(0.0, -amplitude);
        ModulationSpec { target, harmonics: vec![(harmonic, c), (-harmonic, c.conj())] }
    }

    /// `2 a cos(k ω_d t)`.
    pub fn cosine(target: ModulationTarget, harmonic: i32, amplitude: f64) -> Self {
        let c = Complex64::new(amplitude, 0.0);
        ModulationSpec { target, harmonics: vec![(harmonic, c), (-harmonic, c)] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub modes: Vec<ModeSpec>,
    pub couplings: Vec<CouplingSpec>,
    pub modulations: Vec<ModulationSpec>,
    pub drive_frequency: f64,
}

impl SystemSpec {
    pub fn fourier_series(&self) -> Result<HamiltonianFourierSeries> {
        build_fourier_series(&self.modes, &self.couplings, &self.modulations, self.drive_frequency)
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        noise_matrix(&self.modes)
    }

    pub fn mode_index(&self, name: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.name == name)
    }
}

/// H(t) = Σ_k H_k e^{ikω_d t}, stored for k = −K_H..K_H.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianFourierSeries {
    pub n_modes: usize,
    pub drive_frequency: f64,
    pub kinds: Vec<ModeKind>,
    harmonics: BTreeMap<i32, CMat>,
}

impl HamiltonianFourierSeries {
    /// Builds a series directly from matrices; `harmonics` must contain 0 and
    /// satisfy H_{−k} = H_k†.
    pub fn from_harmonics(kinds: Vec<ModeKind>, drive_frequency: f64, harmonics: BTreeMap<i32, CMat>) -> Result<Self> {
        let n_modes = kinds.len();
        let dim = 2 * n_modes;
        for (k, h) in &harmonics {
            if h.nrows() != dim || h.ncols() != dim {
                return Err(Error::validation(format!("H[{k}]"), format!("expected {dim}x{dim}")));
            }
        }
        let Some(h0) = harmonics.get(&0) else {
            return Err(Error::validation("H[0]", "static harmonic missing"));
        };
        if h0.iter().zip(h0.adjoint().iter()).any(|(a, b)| a != b) {
            return Err(Error::validation("H[0]", "static Hamiltonian is not Hermitian"));
        }
        for (k, h) in harmonics.range(1..) {
            let other = harmonics
                .get(&-k)
                .ok_or_else(|| Error::validation(format!("H[{}]", -k), format!("missing partner of H[{k}]")))?;
            if h.adjoint() != *other {
                return Err(Error::validation(format!("H[{}]", -k), format!("must equal H[{k}]^dagger")));
            }
        }
        let series = HamiltonianFourierSeries { n_modes, drive_frequency, kinds, harmonics };
        if series.max_harmonic() > 0 && !(drive_frequency > 0.0) {
            return Err(Error::validation("drive_frequency", "must be positive when modulated"));
        }
        Ok(series)
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn max_harmonic(&self) -> usize {
        self.harmonics.keys().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn is_modulated(&self) -> bool {
        self.max_harmonic() > 0
    }

    pub fn is_optical(&self, mode: usize) -> bool {
        self.kinds.get(mode) == Some(&ModeKind::Optical)
    }

    pub fn harmonic(&self, k: i32) -> Option<&CMat> {
        self.harmonics.get(&k)
    }

    pub fn harmonics(&self) -> impl Iterator<Item = (i32, &CMat)> {
        self.harmonics.iter().map(|(k, h)| (*k, h))
    }

    /// H(t) sampled in the time domain.
    pub fn at_time(&self, t: f64) -> CMat {
        let mut h = CMat::zeros(self.dim(), self.dim());
        for (k, hk) in &self.harmonics {
            let phase = Complex64::from_polar(1.0, *k as f64 * self.drive_frequency * t);
            h += hk * phase;
        }
        h
    }

    /// Same series with every harmonic k ≠ 0 removed.
    pub fn static_part(&self) -> Self {
        let mut harmonics = BTreeMap::new();
        harmonics.insert(0, self.harmonics[&0].clone());
        HamiltonianFourierSeries {
            n_modes: self.n_modes,
            drive_frequency: self.drive_frequency,
            kinds: self.kinds.clone(),
            harmonics,
        }
    }

    /// Short stable digest of the harmonics, used to tag results.
    pub fn digest(&self, noise: &NoiseModel) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_modes as u64).to_le_bytes());
        hasher.update(self.drive_frequency.to_le_bytes());
        for (k, h) in &self.harmonics {
            hasher.update(k.to_le_bytes());
            for z in h.iter() {
                hasher.update(z.re.to_le_bytes());
                hasher.update(z.im.to_le_bytes());
            }
        }
        for x in noise.damping.iter().chain(&noise.correlation) {
            hasher.update(x.to_le_bytes());
        }
        hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// σ = diag(1, −1, 1, −1, …).
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticForm {
    signs: Vec<f64>,
}

impl SymplecticForm {
    pub fn new(n_modes: usize) -> Self {
        SymplecticForm { signs: (0..2 * n_modes).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect() }
    }

    pub fn sign(&self, i: usize) -> f64 {
        self.signs[i]
    }

    pub fn matrix(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.signs.len(),
            self.signs.iter().map(|s| Complex64::new(*s, 0.0)),
        ))
    }

    /// σ·m, exploiting the diagonal structure.
    pub fn apply(&self, m: &CMat) -> CMat {
        let mut out = m.clone();
        for (i, s) in self.signs.iter().enumerate() {
            if *s < 0.0 {
                out.row_mut(i).neg_mut();
            }
        }
        out
    }
}

/// Damping and input-noise correlations, N = diag(γ_i(n̄_i+1), γ_i n̄_i, …).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub damping: Vec<f64>,
    pub occupation: Vec<f64>,
    pub correlation: Vec<f64>,
}

impl NoiseModel {
    /// Symmetrized (semiclassical) variant, γ_i(n̄_i + ½) on both entries.
    pub fn semiclassical(&self) -> NoiseModel {
        let correlation = self
            .occupation
            .iter()
            .enumerate()
            .flat_map(|(i, n)| {
                let v = self.damping[2 * i] * (n + 0.5);
                [v, v]
            })
            .collect();
        NoiseModel { damping: self.damping.clone(), occupation: self.occupation.clone(), correlation }
    }

    pub fn n_matrix(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.correlation.len(),
            self.correlation.iter().map(|x| Complex64::new(*x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.damping.len()
    }
}

pub fn noise_matrix(modes: &[ModeSpec]) -> Result<NoiseModel> {
    let mut damping = Vec::with_capacity(2 * modes.len());
    let mut occupation = Vec::with_capacity(modes.len());
    let mut correlation = Vec::with_capacity(2 * modes.len());
    for m in modes {
        validate_mode(m)?;
        damping.extend([m.damping, m.damping]);
        occupation.push(m.occupation);
        correlation.extend([m.damping * (m.occupation + 1.0), m.damping * m.occupation]);
    }
    Ok(NoiseModel { damping, occupation, correlation })
}

fn validate_mode(m: &ModeSpec) -> Result<()> {
    if !(m.damping > 0.0) || !m.damping.is_finite() {
        return Err(Error::validation(format!("modes.{}.damping", m.name), "must be finite and > 0"));
    }
    if !(m.occupation >= 0.0) || !m.occupation.is_finite() {
        return Err(Error::validation(format!("modes.{}.occupation", m.name), "must be finite and >= 0"));
    }
    if !m.frequency.is_finite() {
        return Err(Error::validation(format!("modes.{}.frequency", m.name), "must be finite"));
    }
    Ok(())
}

/// Coupling pattern: ones on every (pair_i × pair_j) entry and its transpose.
fn coupling_pattern(dim: usize, i: usize, j: usize) -> CMat {
    let mut p = CMat::zeros(dim, dim);
    for a in 0..2 {
        for b in 0..2 {
            p[(2 * i + a, 2 * j + b)] = Complex64::new(1.0, 0.0);
            p[(2 * j + b, 2 * i + a)] = Complex64::new(1.0, 0.0);
        }
    }
    p
}

fn frequency_pattern(dim: usize, mode: &ModeSpec, i: usize) -> CMat {
    let mut p = CMat::zeros(dim, dim);
    let s = Complex64::new(mode.diagonal_sign(), 0.0);
    p[(2 * i, 2 * i)] = s;
    p[(2 * i + 1, 2 * i + 1)] = s;
    p
}

pub fn build_fourier_series(
    modes: &[ModeSpec],
    couplings: &[CouplingSpec],
    modulations: &[ModulationSpec],
    drive_frequency: f64,
) -> Result<HamiltonianFourierSeries> {
    if modes.is_empty() {
        return Err(Error::validation("modes", "at least one mode is required"));
    }
    for m in modes {
        validate_mode(m)?;
    }
    let n = modes.len();
    let dim = 2 * n;

    let mut h0 = CMat::zeros(dim, dim);
    for (i, m) in modes.iter().enumerate() {
        h0 += frequency_pattern(dim, m, i) * Complex64::new(m.frequency, 0.0);
    }
    for (ci, c) in couplings.iter().enumerate() {
        if c.first >= n || c.second >= n {
            return Err(Error::Reference(format!("coupling {ci} refers to an undeclared mode")));
        }
        if c.first == c.second {
            return Err(Error::validation(format!("couplings[{ci}]"), "a mode cannot couple to itself"));
        }
        if !c.g.is_finite() {
            return Err(Error::validation(format!("couplings[{ci}].g"), "must be finite"));
        }
        h0 += coupling_pattern(dim, c.first, c.second) * Complex64::new(c.g, 0.0);
    }

    let mut harmonics: BTreeMap<i32, CMat> = BTreeMap::new();
    harmonics.insert(0, h0);
    for (mi, m) in modulations.iter().enumerate() {
        let pattern = match m.target {
            ModulationTarget::Coupling(c) => {
                let c = couplings
                    .get(c)
                    .ok_or_else(|| Error::Reference(format!("modulation {mi} targets undeclared coupling {c}")))?;
                coupling_pattern(dim, c.first, c.second)
            }
            ModulationTarget::Frequency(i) => {
                let mode = modes
                    .get(i)
                    .ok_or_else(|| Error::Reference(format!("modulation {mi} targets undeclared mode {i}")))?;
                frequency_pattern(dim, mode, i)
            }
        };
        let coeffs = collect_harmonics(mi, &m.harmonics)?;
        for (k, c) in coeffs {
            if k != 0 && !(drive_frequency > 0.0 && drive_frequency.is_finite()) {
                return Err(Error::validation("drive_frequency", "must be positive when modulated"));
            }
            let entry = harmonics.entry(k).or_insert_with(|| CMat::zeros(dim, dim));
            *entry += &pattern * c;
        }
    }
    harmonics.retain(|k, h| *k == 0 || h.iter().any(|z| *z != Complex64::new(0.0, 0.0)));
    Ok(HamiltonianFourierSeries {
        n_modes: n,
        drive_frequency,
        kinds: modes.iter().map(|m| m.kind).collect(),
        harmonics,
    })
}

/// Validates conjugate symmetry and returns a map in which c_{−k} is exactly
/// conj(c_k), so the resulting H(t) is Hermitian bit-for-bit.
fn collect_harmonics(mi: usize, raw: &[(i32, Complex64)]) -> Result<BTreeMap<i32, Complex64>> {
    let mut map: BTreeMap<i32, Complex64> = BTreeMap::new();
    for (k, c) in raw {
        if !c.re.is_finite() || !c.im.is_finite() {
            return Err(Error::validation(format!("modulations[{mi}].harmonic[{k}]"), "must be finite"));
        }
        *map.entry(*k).or_default() += c;
    }
    let scale = map.values().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if let Some(c0) = map.get(&0) {
        if c0.im.abs() > CONJ_TOL * scale {
            return Err(Error::validation(format!("modulations[{mi}].harmonic[0]"), "static harmonic must be real"));
        }
    }
    let mut out = BTreeMap::new();
    for (k, c) in &map {
        if *k < 0 {
            continue;
        }
        if *k == 0 {
            out.insert(0, Complex64::new(c.re, 0.0));
            continue;
        }
        let partner = map.get(&-k).copied().unwrap_or_default();
        if (partner - c.conj()).norm() > CONJ_TOL * scale {
            return Err(Error::validation(
                format!("modulations[{mi}].harmonic[{}]", -k),
                format!("must be the complex conjugate of harmonic {k} ({c}); got {partner}"),
            ));
        }
        out.insert(*k, *c);
        out.insert(-k, c.conj());
    }
    for (k, c) in &map {
        if *k < 0 && !out.contains_key(k) && c.norm() > 0.0 {
            return Err(Error::validation(
                format!("modulations[{mi}].harmonic[{}]", -k),
                format!("missing conjugate partner of harmonic {k}"),
            ));
        }
    }
    Ok(out)
}

/// −iσH_k − (γ/2)[k = 0].
pub fn drift_matrix(series: &HamiltonianFourierSeries, k: i32, noise: &NoiseModel) -> CMat {
    let dim = series.dim();
    let sigma = SymplecticForm::new(series.n_modes);
    let mut d = match series.harmonic(k) {
        Some(h) => sigma.apply(h) * Complex64::new(0.0, -1.0),
        None => CMat::zeros(dim, dim),
    };
    if k == 0 {
        for i in 0..dim {
            d[(i, i)] -= Complex64::new(noise.damping[i] / 2.0, 0.0);
        }
    }
    d
}

/// A_k = iσH_k, the off-diagonal blocks of the assembled inverse.
pub fn coupling_block(series: &HamiltonianFourierSeries, k: i32) -> Option<CMat> {
    let sigma = SymplecticForm::new(series.n_modes);
    series.harmonic(k).map(|h| sigma.apply(h) * Complex64::new(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hybrid(gbar: f64, w2: f64) -> HamiltonianFourierSeries {
        let modes = vec![ModeSpec::optical("a", -1.0, 1.0, 0.0), ModeSpec::mechanical("b", 1.0, 2.3e-5, 0.0)];
        let couplings = vec![CouplingSpec { first: 0, second: 1, g: 0.0 }];
        let mods = vec![
            ModulationSpec::sine(ModulationTarget::Coupling(0), 1, gbar),
            ModulationSpec::cosine(ModulationTarget::Frequency(1), 2, w2),
        ];
        build_fourier_series(&modes, &couplings, &mods, 0.05).unwrap()
    }

    #[test]
    fn hybrid_first_harmonic_matches_b5_pattern() {
        let s = hybrid(0.02, 0.07);
        assert_eq!(s.max_harmonic(), 2);
        let noise =
            noise_matrix(&[ModeSpec::optical("a", -1.0, 1.0, 0.0), ModeSpec::mechanical("b", 1.0, 2.3e-5, 0.0)])
                .unwrap();
        let a1 = coupling_block(&s, 1).unwrap();
        let g = 0.02;
        #[rustfmt::skip]
        let expected = [
            [0.0, 0.0, g, g],
            [0.0, 0.0, -g, -g],
            [g, g, 0.0, 0.0],
            [-g, -g, 0.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((a1[(i, j)] - c(expected[i][j], 0.0)).norm() < 1e-15, "({i},{j})");
            }
        }
        let am1 = coupling_block(&s, -1).unwrap();
        assert!((am1 + a1).iter().all(|z| z.norm() < 1e-15));

        let h1 = s.harmonic(1).unwrap();
        assert_eq!(h1[(0, 2)], c(0.0, -g));
        assert_eq!(h1[(0, 0)], c(0.0, 0.0));

        let a2 = coupling_block(&s, 2).unwrap();
        let diag = [0.0, 0.0, 0.07, -0.07];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { c(0.0, diag[i]) } else { c(0.0, 0.0) };
                assert!((a2[(i, j)] - want).norm() < 1e-15);
            }
        }
        assert!(s.harmonic(3).is_none());
        assert!(drift_matrix(&s, 3, &noise).iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn unmodulated_series_is_static() {
        let modes = vec![ModeSpec::optical("a", -1.0, 1.0, 0.0), ModeSpec::mechanical("b", 1.0, 1e-3, 0.0)];
        let couplings = vec![CouplingSpec { first: 0, second: 1, g: 0.1 }];
        let s = build_fourier_series(&modes, &couplings, &[], 0.0).unwrap();
        assert_eq!(s.max_harmonic(), 0);
        let h0 = s.harmonic(0).unwrap();
        assert_eq!(h0[(0, 0)], c(1.0, 0.0));
        assert_eq!(h0[(2, 2)], c(1.0, 0.0));
        assert_eq!(h0[(1, 3)], c(0.1, 0.0));
        assert_eq!(h0[(3, 1)], c(0.1, 0.0));
    }

    #[test]
    fn two_optical_modes_give_hermitian_6x6() {
        let modes = vec![
            ModeSpec::optical("cool", -1.0, 1.0, 0.0),
            ModeSpec::optical("probe", 0.0, 1.0, 0.0),
            ModeSpec::mechanical("b", 1.0, 2.3e-5, 0.0),
        ];
        let couplings =
            vec![CouplingSpec { first: 0, second: 2, g: 0.02 }, CouplingSpec { first: 1, second: 2, g: 0.002 }];
        let s = build_fourier_series(&modes, &couplings, &[], 0.0).unwrap();
        let h0 = s.harmonic(0).unwrap();
        assert_eq!(h0.nrows(), 6);
        assert_eq!(*h0, h0.adjoint());
        assert_eq!(h0[(0, 1)], c(0.0, 0.0));
        assert_eq!(h0[(2, 4)], c(0.002, 0.0));
        assert_eq!(h0[(0, 2)], c(0.0, 0.0));
    }

    #[test]
    fn optical_drift_diagonal() {
        let modes = vec![ModeSpec::optical("a", 0.3, 1.0, 0.0)];
        let s = build_fourier_series(&modes, &[], &[], 0.0).unwrap();
        let n = noise_matrix(&modes).unwrap();
        let d = drift_matrix(&s, 0, &n);
        assert!((d[(0, 0)] - c(-0.5, 0.3)).norm() < 1e-15);
        assert!((d[(1, 1)] - c(-0.5, -0.3)).norm() < 1e-15);
    }

    #[test]
    fn noise_entries() {
        let n = noise_matrix(&[ModeSpec::optical("a", 0.0, 1.0, 0.0)]).unwrap();
        assert_eq!(n.correlation, vec![1.0, 0.0]);
        let g = 2.3e-5;
        let n = noise_matrix(&[ModeSpec::mechanical("b", 1.0, g, 0.0)]).unwrap();
        assert_eq!(n.correlation, vec![g, 0.0]);
        let n = noise_matrix(&[ModeSpec::mechanical("b", 1.0, g, 1e5)]).unwrap();
        assert_eq!(n.correlation, vec![g * (1e5 + 1.0), g * 1e5]);
        let sc = n.semiclassical();
        assert_eq!(sc.correlation, vec![g * (1e5 + 0.5), g * (1e5 + 0.5)]);
    }

    #[test]
    fn rejects_negative_occupation() {
        let err = noise_matrix(&[ModeSpec::mechanical("b", 1.0, 1e-3, -1.0)]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field.contains("occupation")));
    }

    #[test]
    fn rejects_inconsistent_harmonics() {
        let modes = vec![ModeSpec::optical("a", 0.0, 1.0, 0.0), ModeSpec::mechanical("b", 1.0, 1e-3, 0.0)];
        let couplings = vec![CouplingSpec { first: 0, second: 1, g: 0.0 }];
        let bad = ModulationSpec {
            target: ModulationTarget::Coupling(0),
            harmonics: vec![(1, c(0.0, -0.02)), (-1, c(0.0, -0.02))],
        };
        let err = build_fourier_series(&modes, &couplings, &[bad], 0.05).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));

        let orphan = ModulationSpec { target: ModulationTarget::Coupling(0), harmonics: vec![(-2, c(0.1, 0.0))] };
        assert!(build_fourier_series(&modes, &couplings, &[orphan], 0.05).is_err());

        let undeclared = ModulationSpec::cosine(ModulationTarget::Frequency(5), 2, 0.1);
        let err = build_fourier_series(&modes, &couplings, &[undeclared], 0.05).unwrap_err();
        assert!(matches!(err, Error::Reference(_)));

        let no_drive = ModulationSpec::cosine(ModulationTarget::Frequency(1), 2, 0.1);
        assert!(build_fourier_series(&modes, &couplings, &[no_drive], 0.0).is_err());
    }

    #[test]
    fn symplectic_form_squares_to_identity() {
        let s = SymplecticForm::new(3).matrix();
        assert_eq!(&s * &s, CMat::identity(6, 6));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let s = hybrid(0.02, 0.07);
        let n = noise_matrix(&[ModeSpec::optical("a", -1.0, 1.0, 0.0), ModeSpec::mechanical("b", 1.0, 2.3e-5, 0.0)])
            .unwrap();
        assert_eq!(s.digest(&n), s.digest(&n));
        assert_ne!(s.digest(&n), hybrid(0.02, 0.071).digest(&n));
        assert_eq!(s.digest(&n).len(), 16);
    }
}
