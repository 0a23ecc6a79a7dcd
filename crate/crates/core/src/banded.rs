//! Complex band matrices and an LU factorization with partial pivoting.
//!
//! Storage is row-major with `2*kl + ku + 1` slots per row so that the fill-in
//! produced by row interchanges (upper bandwidth grows to `kl + ku`) fits in
//! place, as in LAPACK's `gbtrf`. Factorization costs O(N·kl·(kl+ku)) and a
//! solve O(N·(2kl+ku)).

use num_complex::Complex64;

use crate::model::CMat;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![ZERO; n * width] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            ZERO
        }
    }

    /// Panics if (i, j) lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band (kl={}, ku={})", self.kl, self.ku);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn to_dense(&self) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, c) in col.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *c += self.data[self.idx(i, j)].norm();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place. Returns the column of the first exactly-zero pivot
    /// on failure.
    pub fn factor(mut self) -> Result<BandLu, usize> {
        let n = self.n;
        let kl = self.kl;
        let ku_f = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].norm();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(k);
            }
            let last_col = (k + ku_f).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            let inv = pivot.inv();
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] * inv;
                self.data[ik] = l;
                if l == ZERO {
                    continue;
                }
                let row_i = i * self.width + self.kl - i;
                let row_k = k * self.width + self.kl - k;
                for j in k + 1..=last_col {
                    let u = self.data[row_k + j];
                    self.data[row_i + j] -= l * u;
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

/// Row-interchange LU factors: L_{N-1}P_{N-1}⋯L_0P_0·A = U.
#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn size(&self) -> usize {
        self.m.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.m.data[self.m.idx(i, j)]
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let ku_f = self.m.kl + self.m.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == ZERO {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.at(i, k) * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku_f).min(n - 1) {
                s -= self.at(i, j) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solves Aᵀ y = b in place (plain transpose, no conjugation).
    pub fn solve_transpose_in_place(&self, b: &mut [Complex64]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let ku_f = self.m.kl + self.m.ku;
        for j in 0..n {
            let mut s = b[j];
            for i in j.saturating_sub(ku_f)..j {
                s -= self.at(i, j) * b[i];
            }
            b[j] = s / self.at(j, j);
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    /// Solves Aᴴ y = b in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [Complex64]) {
        b.iter_mut().for_each(|z| *z = z.conj());
        self.solve_transpose_in_place(b);
        b.iter_mut().for_each(|z| *z = z.conj());
    }

    /// Hager–Higham estimate of ‖A⁻¹‖₁.
    pub fn inverse_norm_one_estimate(&self) -> f64 {
        let n = self.m.n;
        if n == 0 {
            return 0.0;
        }
        let l1 = |v: &[Complex64]| v.iter().map(|z| z.norm()).sum::<f64>();
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        for iter in 0..5 {
            let mut y = x.clone();
            self.solve_in_place(&mut y);
            let e = l1(&y);
            if iter > 0 && e <= est {
                break;
            }
            est = e;
            let mut z: Vec<Complex64> =
                y.iter().map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) }).collect();
            self.solve_adjoint_in_place(&mut z);
            let (jmax, zmax) =
                z.iter()
                    .enumerate()
                    .map(|(j, v)| (j, v.norm()))
                    .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if iter > 0 && zmax <= zx {
                break;
            }
            x = vec![ZERO; n];
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        let mut alt: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / denom), 0.0)
            })
            .collect();
        self.solve_in_place(&mut alt);
        est.max(2.0 * l1(&alt) / (3.0 * n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.set(i, j, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        m
    }

    #[test]
    fn solve_matches_dense_oracle() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 2, 1, 2), (40, 5, 5, 3), (33, 0, 4, 4), (25, 6, 0, 5)] {
            let m = random_band(n, kl, ku, seed);
            let dense = m.to_dense();
            let inv = dense.clone().try_inverse().unwrap();
            let lu = m.clone().factor().unwrap();
            let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.3)).collect();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            let bv = nalgebra::DVector::from_vec(b.clone());
            let xd = &inv * &bv;
            let scale = xd.iter().map(|z| z.norm()).fold(1.0, f64::max);
            for i in 0..n {
                assert!((x[i] - xd[i]).norm() < 1e-11 * scale, "n={n} i={i}");
            }
            let mut y = b.clone();
            lu.solve_transpose_in_place(&mut y);
            let yd = inv.transpose() * &bv;
            for i in 0..n {
                assert!((y[i] - yd[i]).norm() < 1e-11 * scale);
            }
            let mut z = b.clone();
            lu.solve_adjoint_in_place(&mut z);
            let zd = inv.adjoint() * &bv;
            for i in 0..n {
                assert!((z[i] - zd[i]).norm() < 1e-11 * scale);
            }
        }
    }

    #[test]
    fn condition_estimate_is_close_to_exact() {
        let m = random_band(30, 3, 3, 11);
        let inv = m.to_dense().try_inverse().unwrap();
        let exact = (0..30).map(|j| inv.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
        let est = m.factor().unwrap().inverse_norm_one_estimate();
        assert!(est <= exact * (1.0 + 1e-12));
        assert!(est >= exact / 3.0, "est {est} exact {exact}");
    }

    #[test]
    fn zero_pivot_reported() {
        let m = BandMatrix::zeros(3, 1, 1);
        assert_eq!(m.factor().unwrap_err(), 0);
    }

    #[test]
    fn norms_and_products() {
        let m = random_band(12, 2, 3, 7);
        let d = m.to_dense();
        let x: Vec<Complex64> = (0..12).map(|i| Complex64::new(1.0, i as f64)).collect();
        let y = m.mul_vec(&x);
        let yd = &d * nalgebra::DVector::from_vec(x);
        for i in 0..12 {
            assert!((y[i] - yd[i]).norm() < 1e-13);
        }
        let exact = (0..12).map(|j| d.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
        assert!((m.norm_one() - exact).abs() < 1e-13);
    }
}
