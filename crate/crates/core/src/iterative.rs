//! Iterative (substitution) solution for the hybrid trap.
//!
//! In frequency space the reduced unknowns are P = a + a†, b and b† at
//! shifted frequencies ω_n = ω + nω_d:
//!
//! ```text
//! P(n)  = −iη(ω_n)·[g₀Q(n) − iḡQ(n+1) + iḡQ(n−1)] + √κ[χ_O(ω_n) a_in(n) + χ_O*(−ω_n) a_in†(n)]
//! b(n)  = χ_M(ω_n)·[−i(g₀P(n) − iḡP(n+1) + iḡP(n−1)) − iω₂(b(n+2) + b(n−2)) + √Γ b_in(n)]
//! b†(n) = χ_M*(−ω_n)·[+i(g₀P(n) − iḡP(n+1) + iḡP(n−1)) + iω₂(b†(n+2) + b†(n−2)) + √Γ b_in†(n)]
//! ```
//!
//! with Q = b + b†. The ω₂ terms are the excursion correction 𝒢. Each
//! substitution pass admits the unknowns one coupling hop further from P(0);
//! the retained set is then eliminated exactly and everything outside it is
//! dropped. Coefficients live in maps keyed by (unknown or noise, shift).
//!
//! After `order` passes the retained set reaches shifts up to 2·order − 1, and
//! it coincides with the part of the shifted-operator system at K = 2·order − 1
//! that is connected to P(0); the two routes then agree to rounding.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hybrid::HybridTrap;
use crate::spectra::{quadrature_value, spectrum_shifted, Method, SpectrumMeta, SpectrumResult, SpectrumValues};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Susceptibilities {
    pub detuning: f64,
    pub kappa: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
}

impl Susceptibilities {
    pub fn of(p: &HybridTrap) -> Self {
        Susceptibilities { detuning: p.detuning, kappa: p.kappa, omega_m: p.omega_m, gamma_m: p.gamma_m }
    }

    /// χ_O(ω) = [−i(ω + Δ̄) + κ/2]⁻¹.
    pub fn chi_o(&self, w: f64) -> Complex64 {
        Complex64::new(self.kappa / 2.0, -(w + self.detuning)).inv()
    }

    /// χ_M(ω) = [−i(ω − ω̄_M) + Γ_M/2]⁻¹.
    pub fn chi_m(&self, w: f64) -> Complex64 {
        Complex64::new(self.gamma_m / 2.0, -(w - self.omega_m)).inv()
    }

    /// η(ω) = χ_O(ω) − χ_O*(−ω).
    pub fn eta(&self, w: f64) -> Complex64 {
        self.chi_o(w) - self.chi_o(-w).conj()
    }

    /// μ(ω) = χ_M(ω) − χ_M*(−ω).
    pub fn mu(&self, w: f64) -> Complex64 {
        self.chi_m(w) - self.chi_m(-w).conj()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unknown {
    P(i64),
    B(i64),
    Bd(i64),
}

impl Unknown {
    pub fn shift(&self) -> i64 {
        match self {
            Unknown::P(n) | Unknown::B(n) | Unknown::Bd(n) => *n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoiseChannel {
    AIn,
    AInDag,
    BIn,
    BInDag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Unknown(Unknown),
    Noise(NoiseChannel, i64),
}

pub type Expr = BTreeMap<Term, Complex64>;

fn add(e: &mut Expr, t: Term, c: Complex64) {
    if c == Complex64::new(0.0, 0.0) {
        return;
    }
    *e.entry(t).or_default() += c;
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterativeSolution {
    pub order: usize,
    pub omega: f64,
    /// Retained unknowns with their hop distance from P(0).
    pub window: BTreeMap<Unknown, usize>,
    /// Equations of the retained unknowns before elimination (including the
    /// ω₂ excursion terms), truncated to the window.
    pub equations: BTreeMap<Unknown, Expr>,
    /// P(0) = Σ A_{channel, shift} · noise(channel, ω + shift·ω_d).
    pub coefficients: BTreeMap<(NoiseChannel, i64), Complex64>,
}

impl IterativeSolution {
    pub fn max_shift(&self) -> i64 {
        self.coefficients.keys().map(|(_, n)| n.abs()).max().unwrap_or(0)
    }

    /// ⟨y y†⟩ with y = P/√2, given the bath occupations.
    pub fn s_yy(&self, n_a: f64, n_b: f64) -> f64 {
        0.5 * self
            .coefficients
            .iter()
            .map(|((ch, _), c)| {
                let w = match ch {
                    NoiseChannel::AIn => n_a + 1.0,
                    NoiseChannel::AInDag => n_a,
                    NoiseChannel::BIn => n_b + 1.0,
                    NoiseChannel::BInDag => n_b,
                };
                c.norm_sqr() * w
            })
            .sum::<f64>()
    }
}

fn check_params(p: &HybridTrap) -> Result<()> {
    if p.detuning2 != 0.0 {
        return Err(Error::Contract("the iterative solution assumes an unmodulated detuning (Δ₂ = 0)".into()));
    }
    if p.kappa <= 0.0 || p.gamma_m <= 0.0 {
        return Err(Error::validation("kappa/gamma_m", "damping rates must be positive"));
    }
    Ok(())
}

fn neighbours(p: &HybridTrap, u: Unknown) -> Vec<Unknown> {
    let mut out = Vec::new();
    let n = u.shift();
    match u {
        Unknown::P(_) => {
            if p.static_g != 0.0 {
                out.extend([Unknown::B(n), Unknown::Bd(n)]);
            }
            if p.g_bar != 0.0 {
                out.extend([Unknown::B(n + 1), Unknown::Bd(n + 1), Unknown::B(n - 1), Unknown::Bd(n - 1)]);
            }
        }
        Unknown::B(_) | Unknown::Bd(_) => {
            if p.static_g != 0.0 {
                out.push(Unknown::P(n));
            }
            if p.g_bar != 0.0 {
                out.extend([Unknown::P(n + 1), Unknown::P(n - 1)]);
            }
            let partner = |m| if matches!(u, Unknown::B(_)) { Unknown::Bd(m) } else { Unknown::B(m) };
            out.push(partner(n));
            if p.omega2 != 0.0 {
                let same = |m| if matches!(u, Unknown::B(_)) { Unknown::B(m) } else { Unknown::Bd(m) };
                out.extend([same(n + 2), same(n - 2)]);
            }
        }
    }
    out
}

/// Unknowns reachable from P(0) in at most `order` hops. b and b† at the same
/// shift always enter together.
fn window(p: &HybridTrap, order: usize) -> BTreeMap<Unknown, usize> {
    let mut depth = BTreeMap::new();
    depth.insert(Unknown::P(0), 0usize);
    let mut queue = VecDeque::from([Unknown::P(0)]);
    while let Some(u) = queue.pop_front() {
        let d = depth[&u];
        for v in neighbours(p, u) {
            let same_node =
                matches!((u, v), (Unknown::B(a), Unknown::Bd(b)) | (Unknown::Bd(a), Unknown::B(b)) if a == b);
            let dv = if same_node { d } else { d + 1 };
            if dv <= order && !depth.contains_key(&v) {
                depth.insert(v, dv);
                if same_node {
                    queue.push_front(v);
                } else {
                    queue.push_back(v);
                }
            }
        }
    }
    depth
}

fn equation(p: &HybridTrap, chi: &Susceptibilities, omega: f64, u: Unknown) -> Expr {
    let mut e = Expr::new();
    let n = u.shift();
    let wn = omega + n as f64 * p.omega_d;
    let g0 = Complex64::new(p.static_g, 0.0);
    let gb = Complex64::new(p.g_bar, 0.0);
    // [gX](n) = g₀X(n) − iḡX(n+1) + iḡX(n−1)
    let g_terms = [(0i64, g0), (1, -I * gb), (-1, I * gb)];
    match u {
        Unknown::P(_) => {
            let eta = chi.eta(wn);
            for (dn, c) in g_terms {
                add(&mut e, Term::Unknown(Unknown::B(n + dn)), -I * eta * c);
                add(&mut e, Term::Unknown(Unknown::Bd(n + dn)), -I * eta * c);
            }
            let sk = p.kappa.sqrt();
            add(&mut e, Term::Noise(NoiseChannel::AIn, n), sk * chi.chi_o(wn));
            add(&mut e, Term::Noise(NoiseChannel::AInDag, n), sk * chi.chi_o(-wn).conj());
        }
        Unknown::B(_) | Unknown::Bd(_) => {
            let annihilation = matches!(u, Unknown::B(_));
            let (x, sign, channel) = if annihilation {
                (chi.chi_m(wn), -1.0, NoiseChannel::BIn)
            } else {
                (chi.chi_m(-wn).conj(), 1.0, NoiseChannel::BInDag)
            };
            for (dn, c) in g_terms {
                add(&mut e, Term::Unknown(Unknown::P(n + dn)), x * sign * I * c);
            }
            let w2 = Complex64::new(p.omega2, 0.0);
            for dn in [2, -2] {
                let target = if annihilation { Unknown::B(n + dn) } else { Unknown::Bd(n + dn) };
                add(&mut e, Term::Unknown(target), x * sign * I * w2);
            }
            add(&mut e, Term::Noise(channel, n), x * p.gamma_m.sqrt());
        }
    }
    e
}

/// Builds and eliminates the retained system at one ω.
pub fn iterative_solution(p: &HybridTrap, omega: f64, order: usize) -> Result<IterativeSolution> {
    if order < 1 {
        return Err(Error::Contract("iterative order must be at least 1".into()));
    }
    check_params(p)?;
    let chi = Susceptibilities::of(p);
    let win = window(p, order);
    let kept: BTreeSet<Unknown> = win.keys().copied().collect();
    let mut equations = BTreeMap::new();
    for &u in &kept {
        let mut e = equation(p, &chi, omega, u);
        e.retain(|t, _| match t {
            Term::Unknown(v) => kept.contains(v),
            Term::Noise(..) => true,
        });
        equations.insert(u, e);
    }

    let mut system = equations.clone();
    let mut elimination: Vec<Unknown> = kept.iter().copied().filter(|u| *u != Unknown::P(0)).collect();
    elimination.sort_by_key(|u| (std::cmp::Reverse(win[u]), *u));
    for u in elimination {
        let mut e = system.remove(&u).unwrap();
        resolve_self(&mut e, u, omega)?;
        for other in system.values_mut() {
            if let Some(c) = other.remove(&Term::Unknown(u)) {
                for (t, v) in &e {
                    add(other, *t, c * v);
                }
            }
        }
    }
    let mut root = system.remove(&Unknown::P(0)).unwrap();
    resolve_self(&mut root, Unknown::P(0), omega)?;
    let coefficients = root
        .into_iter()
        .map(|(t, c)| match t {
            Term::Noise(ch, n) => Ok(((ch, n), c)),
            Term::Unknown(v) => Err(Error::Contract(format!("unknown {v:?} survived elimination"))),
        })
        .collect::<Result<_>>()?;
    Ok(IterativeSolution { order, omega, window: win, equations, coefficients })
}

/// u = Σ c_t t + c_u u  ⇒  u = Σ c_t t / (1 − c_u).
fn resolve_self(e: &mut Expr, u: Unknown, omega: f64) -> Result<()> {
    if let Some(c) = e.remove(&Term::Unknown(u)) {
        let denom = Complex64::new(1.0, 0.0) - c;
        if denom.norm() < 1e-300 {
            return Err(Error::Singular { omega, column: 0 });
        }
        let inv = denom.inv();
        e.values_mut().for_each(|v| *v *= inv);
    }
    Ok(())
}

/// S_yy(ω) of the optical quadrature y = (a + a†)/√2 by substitution.
pub fn iterative_spectrum(p: &HybridTrap, grid: &[f64], order: usize) -> Result<SpectrumResult> {
    if order < 1 {
        return Err(Error::Contract("iterative order must be at least 1".into()));
    }
    let values = grid
        .par_iter()
        .map(|&w| iterative_solution(p, w, order).map(|s| s.s_yy(p.n_a, p.n_b)))
        .collect::<Result<Vec<_>>>()?;
    let series = p.series()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Iterative,
        values: SpectrumValues::Scalar(values),
        stderr: None,
        meta: SpectrumMeta { truncation: Some(order), params_hash: series.digest(&p.noise()?), label: "S_yy".into() },
    })
}

/// S_yy from the shifted-operator route, for comparison with the iterative one.
pub fn shifted_s_yy(p: &HybridTrap, grid: &[f64], k: usize) -> Result<SpectrumResult> {
    let series = p.series()?;
    let noise = p.noise()?;
    spectrum_shifted(&series, &noise, grid, k)?.project("S_yy", |s| quadrature_value(s, 0, 0.0))
}

/// Truncation of the shifted-operator system matched to an iterative order.
pub fn matched_truncation(order: usize) -> usize {
    (2 * order).saturating_sub(1)
}

/// Max relative deviation of the iterative S_yy from the shifted-operator
/// S_yy at the matched truncation K = 2·order − 1.
pub fn truncation_equivalence(p: &HybridTrap, grid: &[f64], order: usize) -> Result<f64> {
    let it = iterative_spectrum(p, grid, order)?;
    let full = shifted_s_yy(p, grid, matched_truncation(order))?;
    full.max_relative_deviation(&it)
}
