//! Truncated block transfer matrices.
//!
//! Block rows and columns carry a signed index s ∈ [−K, K] meaning the
//! operator at frequency ω + sω_d. The assembled inverse has diagonal blocks
//! X(ω + sω_d) = −i(ω + sω_d)I + iσH_0 + γ/2 and off-diagonal blocks
//! A_{l−s} = iσH_{l−s} at (s, l). With this labelling the translation
//! identity reads B_{s,l}(ω) = B_{s−n,l−n}(ω + nω_d) for the exact inverse B.

use num_complex::Complex64;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::model::{coupling_block, CMat, HamiltonianFourierSeries, NoiseModel, SymplecticForm};
use crate::spectra::{Method, SpectrumMeta, SpectrumResult, SpectrumValues};

pub const CONDITION_LIMIT: f64 = 1e12;
pub const DEFAULT_TRUNCATION: usize = 8;

#[derive(Clone, Debug)]
pub struct TruncatedTransferMatrix {
    pub omega: f64,
    pub drive_frequency: f64,
    pub k: usize,
    pub dim: usize,
    assembled: BandMatrix,
    inverse: Option<CMat>,
}

/// A factorized assembled inverse, able to produce individual block rows or
/// columns of T without forming the full inverse.
pub struct TransferFactorization {
    pub omega: f64,
    pub k: usize,
    pub dim: usize,
    pub condition: f64,
    lu: BandLu,
}

/// Static building blocks shared by every ω of a sweep.
#[derive(Clone, Debug)]
pub struct BlockTemplate {
    dim: usize,
    drive_frequency: f64,
    band: usize,
    static_block: CMat,
    couplings: Vec<(i32, CMat)>,
}

impl BlockTemplate {
    pub fn new(series: &HamiltonianFourierSeries, noise: &NoiseModel) -> Result<Self> {
        let dim = series.dim();
        if noise.dim() != dim {
            return Err(Error::Contract(format!(
                "noise model has dimension {} but the Hamiltonian has {dim}",
                noise.dim()
            )));
        }
        let sigma = SymplecticForm::new(series.n_modes);
        let mut static_block = sigma.apply(series.harmonic(0).expect("H_0 always present")) * Complex64::new(0.0, 1.0);
        for i in 0..dim {
            static_block[(i, i)] += Complex64::new(noise.damping[i] / 2.0, 0.0);
        }
        let couplings =
            series.harmonics().filter(|(k, _)| *k != 0).map(|(k, _)| (k, coupling_block(series, k).unwrap())).collect();
        Ok(BlockTemplate {
            dim,
            drive_frequency: series.drive_frequency,
            band: series.max_harmonic(),
            static_block,
            couplings,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_harmonic(&self) -> usize {
        self.band
    }

    /// X(ω) = −iωI + iσH_0 + γ/2.
    pub fn diagonal_block(&self, omega: f64) -> CMat {
        let mut x = self.static_block.clone();
        for i in 0..self.dim {
            x[(i, i)] -= Complex64::new(0.0, omega);
        }
        x
    }

    /// Assembles the (2K+1)-block matrix. Harmonics reaching past the
    /// truncation are simply cut, so any K ≥ 0 is accepted here; the public
    /// [`assemble_inverse`] insists on K ≥ K_H.
    pub fn assemble(&self, omega: f64, k: usize) -> Result<BandMatrix> {
        if !omega.is_finite() {
            return Err(Error::Contract("omega must be finite".into()));
        }
        let d = self.dim;
        let nb = 2 * k + 1;
        let bw = (self.band.min(2 * k) + 1) * d - 1;
        let mut m = BandMatrix::zeros(nb * d, bw, bw);
        for bi in 0..nb {
            let s = bi as i64 - k as i64;
            let x = self.diagonal_block(omega + s as f64 * self.drive_frequency);
            put_block(&mut m, bi, bi, &x);
            for (h, a) in &self.couplings {
                let bj = bi as i64 + *h as i64;
                if bj >= 0 && (bj as usize) < nb {
                    put_block(&mut m, bi, bj as usize, a);
                }
            }
        }
        Ok(m)
    }

    pub fn factor(&self, omega: f64, k: usize) -> Result<TransferFactorization> {
        let m = self.assemble(omega, k)?;
        factor_checked(m, omega, k, self.dim)
    }
}

fn put_block(m: &mut BandMatrix, bi: usize, bj: usize, block: &CMat) {
    let d = block.nrows();
    for r in 0..d {
        for c in 0..d {
            let v = block[(r, c)];
            if v != Complex64::new(0.0, 0.0) || r == c || bi == bj {
                m.set(bi * d + r, bj * d + c, v);
            }
        }
    }
}

fn factor_checked(m: BandMatrix, omega: f64, k: usize, dim: usize) -> Result<TransferFactorization> {
    let norm = m.norm_one();
    let lu = m.factor().map_err(|column| Error::Singular { omega, column })?;
    let condition = norm * lu.inverse_norm_one_estimate();
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::IllConditioned { omega, condition });
    }
    Ok(TransferFactorization { omega, k, dim, condition, lu })
}

impl TransferFactorization {
    fn nb(&self) -> usize {
        2 * self.k + 1
    }

    fn check_index(&self, s: i64) -> Result<usize> {
        if s.unsigned_abs() as usize > self.k {
            return Err(Error::IndexOutOfRange { s, l: s, k: self.k });
        }
        Ok((s + self.k as i64) as usize)
    }

    /// Blocks T_{s,l} for l = −K..K (index l + K).
    pub fn row_blocks(&self, s: i64) -> Result<Vec<CMat>> {
        let bs = self.check_index(s)?;
        let d = self.dim;
        let n = self.nb() * d;
        let mut out = vec![CMat::zeros(d, d); self.nb()];
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..d {
            e.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            e[bs * d + r] = Complex64::new(1.0, 0.0);
            self.lu.solve_transpose_in_place(&mut e);
            for (bl, blk) in out.iter_mut().enumerate() {
                for c in 0..d {
                    blk[(r, c)] = e[bl * d + c];
                }
            }
        }
        Ok(out)
    }

    /// Blocks T_{s,l} for s = −K..K (index s + K).
    pub fn column_blocks(&self, l: i64) -> Result<Vec<CMat>> {
        let bl = self.check_index(l)?;
        let d = self.dim;
        let n = self.nb() * d;
        let mut out = vec![CMat::zeros(d, d); self.nb()];
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..d {
            e.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            e[bl * d + c] = Complex64::new(1.0, 0.0);
            self.lu.solve_in_place(&mut e);
            for (bs, blk) in out.iter_mut().enumerate() {
                for r in 0..d {
                    blk[(r, c)] = e[bs * d + r];
                }
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> CMat {
        let n = self.nb() * self.dim;
        let mut inv = CMat::zeros(n, n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            e.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            e[c] = Complex64::new(1.0, 0.0);
            self.lu.solve_in_place(&mut e);
            for r in 0..n {
                inv[(r, c)] = e[r];
            }
        }
        inv
    }
}

pub fn assemble_inverse(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    omega: f64,
    k: usize,
) -> Result<TruncatedTransferMatrix> {
    if k < series.max_harmonic() {
        return Err(Error::Contract(format!(
            "truncation K = {k} is smaller than the highest harmonic {}",
            series.max_harmonic()
        )));
    }
    let template = BlockTemplate::new(series, noise)?;
    let assembled = template.assemble(omega, k)?;
    Ok(TruncatedTransferMatrix {
        omega,
        drive_frequency: series.drive_frequency,
        k,
        dim: series.dim(),
        assembled,
        inverse: None,
    })
}

pub fn invert(tm: TruncatedTransferMatrix) -> Result<TruncatedTransferMatrix> {
    let fact = factor_checked(tm.assembled.clone(), tm.omega, tm.k, tm.dim)?;
    let inv = fact.inverse();
    let n = inv.nrows();
    let mut residual: f64 = 0.0;
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = inv[(r, c)];
        }
        let prod = tm.assembled.mul_vec(&col);
        for (r, v) in prod.iter().enumerate() {
            let target = if r == c { 1.0 } else { 0.0 };
            residual = residual.max((v - target).norm());
        }
    }
    let bound = 1e-10 * tm.assembled.max_abs().max(1.0);
    if residual > bound {
        return Err(Error::Residual { omega: tm.omega, residual, bound });
    }
    Ok(TruncatedTransferMatrix { inverse: Some(inv), ..tm })
}

impl TruncatedTransferMatrix {
    pub fn blocks_per_side(&self) -> usize {
        self.k
    }

    pub fn size(&self) -> usize {
        (2 * self.k + 1) * self.dim
    }

    pub fn assembled_dense(&self) -> CMat {
        self.assembled.to_dense()
    }

    pub fn assembled_band(&self) -> &BandMatrix {
        &self.assembled
    }

    fn offsets(&self, s: i64, l: i64) -> Result<(usize, usize)> {
        let k = self.k as i64;
        if s.abs() > k || l.abs() > k {
            return Err(Error::IndexOutOfRange { s, l, k: self.k });
        }
        Ok((((s + k) as usize) * self.dim, ((l + k) as usize) * self.dim))
    }

    /// Block (s, l) of the assembled inverse (X or A).
    pub fn assembled_block(&self, s: i64, l: i64) -> Result<CMat> {
        let (r0, c0) = self.offsets(s, l)?;
        Ok(CMat::from_fn(self.dim, self.dim, |r, c| self.assembled.get(r0 + r, c0 + c)))
    }

    /// Block T_{s,l}(ω); requires [`invert`] first.
    pub fn block(&self, s: i64, l: i64) -> Result<CMat> {
        let (r0, c0) = self.offsets(s, l)?;
        let inv =
            self.inverse.as_ref().ok_or_else(|| Error::Contract("transfer matrix has not been inverted".into()))?;
        Ok(inv.view((r0, c0), (self.dim, self.dim)).into_owned())
    }

    pub fn inverse(&self) -> Option<&CMat> {
        self.inverse.as_ref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslationResidual {
    pub max_abs: f64,
    /// Largest |entry| among the compared blocks.
    pub scale: f64,
    pub blocks_compared: usize,
}

impl TranslationResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

/// Compares T_{s,l}(ω) with T_{s−n,l−n}(ω + nω_d) over block pairs whose
/// indices stay at least `margin` blocks away from the truncation edge.
pub fn translation_residual_with_margin(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    omega: f64,
    k: usize,
    shift: i64,
    margin: usize,
) -> Result<TranslationResidual> {
    let template = BlockTemplate::new(series, noise)?;
    let here = template.factor(omega, k)?.inverse();
    let there = template.factor(omega + shift as f64 * series.drive_frequency, k)?.inverse();
    let d = template.dim();
    let reach = k as i64 - margin as i64;
    if reach < 0 {
        return Err(Error::Contract(format!("margin {margin} leaves no interior blocks at K = {k}")));
    }
    let mut out = TranslationResidual { max_abs: 0.0, scale: 0.0, blocks_compared: 0 };
    for s in -reach..=reach {
        for l in -reach..=reach {
            let (s2, l2) = (s - shift, l - shift);
            if s2.abs() > reach || l2.abs() > reach {
                continue;
            }
            out.blocks_compared += 1;
            let (r1, c1) = (((s + k as i64) as usize) * d, ((l + k as i64) as usize) * d);
            let (r2, c2) = (((s2 + k as i64) as usize) * d, ((l2 + k as i64) as usize) * d);
            for r in 0..d {
                for c in 0..d {
                    let a = here[(r1 + r, c1 + c)];
                    let b = there[(r2 + r, c2 + c)];
                    out.max_abs = out.max_abs.max((a - b).norm());
                    out.scale = out.scale.max(a.norm()).max(b.norm());
                }
            }
        }
    }
    Ok(out)
}

/// Translation residual over blocks at distance ≥ K_H + 2 from the edge.
pub fn translation_residual(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    omega: f64,
    k: usize,
    shift: i64,
) -> Result<TranslationResidual> {
    translation_residual_with_margin(series, noise, omega, k, shift, series.max_harmonic() + 2)
}

/// Closed-form unmodulated spectrum S(ω) = X(ω)⁻¹ N X(ω)⁻ᴴ.
pub fn standard_spectrum_oracle(
    series: &HamiltonianFourierSeries,
    noise: &NoiseModel,
    grid: &[f64],
) -> Result<SpectrumResult> {
    if series.is_modulated() {
        return Err(Error::Contract("the standard oracle only applies to unmodulated systems".into()));
    }
    let template = BlockTemplate::new(series, noise)?;
    let n = noise.n_matrix();
    let values = grid
        .iter()
        .map(|&w| {
            let x = template.diagonal_block(w);
            let t = x.try_inverse().ok_or(Error::Singular { omega: w, column: 0 })?;
            Ok(&t * &n * t.adjoint())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        omega: grid.to_vec(),
        m: 0,
        method: Method::Oracle,
        values: SpectrumValues::Matrix(values),
        stderr: None,
        meta: SpectrumMeta { truncation: Some(0), params_hash: series.digest(noise), label: "S_cc".into() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::HybridTrap;
    use crate::model::{build_fourier_series, noise_matrix, ModeSpec};

    #[test]
    fn decoupled_optical_mode_at_zero_truncation() {
        let modes = vec![ModeSpec::optical("a", 0.4, 1.0, 0.0)];
        let s = build_fourier_series(&modes, &[], &[], 0.0).unwrap();
        let n = noise_matrix(&modes).unwrap();
        let tm = assemble_inverse(&s, &n, 0.0, 0).unwrap();
        let x = tm.assembled_block(0, 0).unwrap();
        // X(0) = 1/χ_O(0) on the a entry: κ/2 − iΔ̄.
        assert!((x[(0, 0)] - Complex64::new(0.5, -0.4)).norm() < 1e-15);
        assert!((x[(1, 1)] - Complex64::new(0.5, 0.4)).norm() < 1e-15);

        let w = 0.7;
        let tm = invert(assemble_inverse(&s, &n, w, 0).unwrap()).unwrap();
        let t = tm.block(0, 0).unwrap();
        let chi = |w: f64| Complex64::new(0.5, -(w + 0.4)).inv();
        assert!((t[(0, 0)] - chi(w)).norm() < 1e-14);
        assert!((t[(1, 1)] - chi(-w).conj()).norm() < 1e-14);
    }

    #[test]
    fn hybrid_layout_and_sparsity() {
        let p = HybridTrap::fig2a(0.9);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let tm = assemble_inverse(&s, &n, 1.0, 8).unwrap();
        assert_eq!(tm.size(), 68);
        for si in -8i64..=8 {
            for li in -8i64..=8 {
                let b = tm.assembled_block(si, li).unwrap();
                if (si - li).abs() > 2 {
                    assert!(b.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
                }
            }
        }
        let a = tm.assembled_block(0, 1).unwrap();
        assert_eq!(a, coupling_block(&s, 1).unwrap());
        let x = tm.assembled_block(3, 3).unwrap();
        let tpl = BlockTemplate::new(&s, &n).unwrap();
        assert_eq!(x, tpl.diagonal_block(1.0 + 3.0 * 0.05));
    }

    #[test]
    fn inverse_matches_dense_lu() {
        let p = HybridTrap::fig2a(0.9);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let tm = invert(assemble_inverse(&s, &n, 1.0, 8).unwrap()).unwrap();
        let dense = tm.assembled_dense().lu().try_inverse().unwrap();
        let ours = tm.inverse().unwrap();
        let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = (ours - &dense).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10 * scale, "diff {diff} scale {scale}");
        assert!(tm.block(1, 0).unwrap().iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn row_and_column_blocks_agree_with_inverse() {
        let p = HybridTrap::fig2a(0.5);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let tpl = BlockTemplate::new(&s, &n).unwrap();
        let f = tpl.factor(0.97, 6).unwrap();
        let inv = f.inverse();
        let rows = f.row_blocks(2).unwrap();
        let cols = f.column_blocks(-1).unwrap();
        for j in 0..13 {
            let r = inv.view((8 * 4, j * 4), (4, 4)).into_owned();
            assert!((&rows[j] - r).iter().all(|z| z.norm() < 1e-9));
            let c = inv.view((j * 4, 5 * 4), (4, 4)).into_owned();
            assert!((&cols[j] - c).iter().all(|z| z.norm() < 1e-9));
        }
    }

    #[test]
    fn block_bounds_checked() {
        let p = HybridTrap::fig2a(0.5);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let tm = assemble_inverse(&s, &n, 1.0, 2).unwrap();
        assert!(matches!(tm.block(0, 0), Err(Error::Contract(_))));
        let tm = invert(tm).unwrap();
        assert!(matches!(tm.block(3, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(tm.block(0, -5), Err(Error::IndexOutOfRange { .. })));
        assert!(assemble_inverse(&s, &n, 1.0, 1).is_err());
    }

    #[test]
    fn translation_exact_without_modulation() {
        let p = HybridTrap { omega2: 0.0, g_bar: 0.0, static_g: 0.02, ..HybridTrap::fig2a(0.0) };
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let r = translation_residual(&s, &n, 1.0, 8, 1).unwrap();
        assert!(r.max_abs == 0.0 || r.relative() < 1e-14, "{r:?}");
    }

    #[test]
    fn translation_shrinks_towards_centre() {
        let p = HybridTrap::fig2a(0.05);
        let (s, n) = (p.series().unwrap(), p.noise().unwrap());
        let centre = translation_residual_with_margin(&s, &n, 1.0, 8, 1, 5).unwrap();
        let edge = translation_residual_with_margin(&s, &n, 1.0, 8, 1, 0).unwrap();
        assert!(centre.relative() < 1e-8, "{centre:?}");
        assert!(edge.relative() > 10.0 * centre.relative());
    }

    #[test]
    fn ill_conditioned_matrix_rejected() {
        let modes = vec![ModeSpec::optical("a", 0.0, 1e-14, 0.0), ModeSpec::mechanical("b", 1.0, 1.0, 0.0)];
        let s = build_fourier_series(&modes, &[], &[], 0.0).unwrap();
        let n = noise_matrix(&modes).unwrap();
        let tpl = BlockTemplate::new(&s, &n).unwrap();
        let err = tpl.factor(0.0, 0).err().unwrap();
        assert!(matches!(err, Error::IllConditioned { omega, .. } if omega == 0.0));
    }
}
