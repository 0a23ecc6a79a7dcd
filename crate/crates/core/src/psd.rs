//! Welch power-spectral-density estimation.
//!
//! The periodogram of one segment is P(ω_k) = (dt / Σw²) |Σ_j w_j x_j e^{iω_k t_j}|²
//! at ω_k = 2πk/(L dt), which matches the two-sided spectra S(ω) = ∫dτ e^{iωτ}⟨x(t+τ)x*(t)⟩
//! produced by the analytic routes. Segments use a periodic Hann window with 50%
//! overlap; error bars come from the scatter between segments.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Keep only bins with ω in [band.0, band.1].
    pub band: (f64, f64),
}

pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|j| 0.5 - 0.5 * (2.0 * PI * j as f64 / len as f64).cos()).collect()
}

/// Running per-bin sums of segment periodograms.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdAccumulator {
    pub omega: Vec<f64>,
    bins: Vec<usize>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    pub segments: usize,
}

impl PsdAccumulator {
    pub fn merge(&mut self, other: &PsdAccumulator) {
        assert_eq!(self.bins, other.bins, "accumulators over different bins");
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.segments += other.segments;
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.segments.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of the mean from the inter-segment variance.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.segments as f64;
        if self.segments < 2 {
            return vec![f64::INFINITY; self.sum.len()];
        }
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let mean = s / n;
                let var = ((q - n * mean * mean) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

pub struct Welch {
    cfg: WelchConfig,
    dt: f64,
    window: Vec<f64>,
    norm: f64,
    fft: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
    omega: Vec<f64>,
}

impl Welch {
    pub fn new(cfg: WelchConfig, dt: f64) -> Result<Self> {
        if cfg.segment_len < 4 {
            return Err(Error::Resolution("segment length must be at least 4 samples".into()));
        }
        let l = cfg.segment_len;
        let dw = 2.0 * PI / (l as f64 * dt);
        let nyquist = PI / dt;
        if cfg.band.0 >= cfg.band.1 || cfg.band.1.abs() > nyquist || cfg.band.0.abs() > nyquist {
            return Err(Error::Resolution(format!(
                "band [{}, {}] must be ordered and inside the Nyquist range ±{nyquist}",
                cfg.band.0, cfg.band.1
            )));
        }
        let kmin = (cfg.band.0 / dw).ceil() as i64;
        let kmax = (cfg.band.1 / dw).floor() as i64;
        let bins: Vec<usize> = (kmin..=kmax).map(|k| k.rem_euclid(l as i64) as usize).collect();
        let omega = (kmin..=kmax).map(|k| k as f64 * dw).collect();
        let window = hann(l);
        let norm = dt / window.iter().map(|w| w * w).sum::<f64>();
        let fft = FftPlanner::new().plan_fft_inverse(l);
        Ok(Welch { cfg, dt, window, norm, fft, bins, omega })
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * PI / (self.cfg.segment_len as f64 * self.dt)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn empty(&self) -> PsdAccumulator {
        PsdAccumulator {
            omega: self.omega.clone(),
            bins: self.bins.clone(),
            sum: vec![0.0; self.bins.len()],
            sum_sq: vec![0.0; self.bins.len()],
            segments: 0,
        }
    }

    /// Number of 50%-overlapping segments that fit in `samples`.
    pub fn segment_count(&self, samples: usize) -> usize {
        let l = self.cfg.segment_len;
        if samples < l {
            0
        } else {
            (samples - l) / (l / 2) + 1
        }
    }

    pub fn accumulate(&self, acc: &mut PsdAccumulator, x: &[Complex64]) -> Result<()> {
        let l = self.cfg.segment_len;
        let count = self.segment_count(x.len());
        if count == 0 {
            return Err(Error::Resolution(format!(
                "trajectory of {} samples is shorter than one segment ({l})",
                x.len()
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for s in 0..count {
            let start = s * (l / 2);
            for (j, b) in buf.iter_mut().enumerate() {
                *b = x[start + j] * self.window[j];
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            // The segment starts at t_start, which only contributes a phase.
            for (i, &k) in self.bins.iter().enumerate() {
                let p = self.norm * buf[k].norm_sqr();
                acc.sum[i] += p;
                acc.sum_sq[i] += p * p;
            }
            acc.segments += 1;
        }
        Ok(())
    }

    /// |W(ν)|² of the window, W(ν) = Σ_j w_j e^{iν j dt}.
    pub fn window_response(&self, nu: f64) -> f64 {
        let l = self.cfg.segment_len as f64;
        let d = |x: f64| -> Complex64 {
            let h = x * self.dt / 2.0;
            let amp = if h.sin().abs() < 1e-9 { l * (l * h).cos() / h.cos() } else { (l * h).sin() / h.sin() };
            Complex64::from_polar(amp, (l - 1.0) * h)
        };
        let step = 2.0 * PI / (l * self.dt);
        let w = d(nu) * 0.5 - d(nu - step) * 0.25 - d(nu + step) * 0.25;
        w.norm_sqr()
    }

    /// Expected Welch estimate for a process with spectrum `s`:
    /// E[P(ω_k)] = (dt/Σw²) ∫ dν/2π S(ν) |W(ω_k − ν)|², with S sampled at
    /// `nu` (uniform spacing `step`, see [`Welch::expectation_grid`]).
    pub fn expected(&self, s: &[f64], nu: &[f64], step: f64) -> Vec<f64> {
        self.omega
            .iter()
            .map(|&wk| {
                let mut acc = 0.0;
                for (v, x) in s.iter().zip(nu) {
                    acc += v * self.window_response(wk - x);
                }
                acc * step * self.norm / (2.0 * PI)
            })
            .collect()
    }

    /// Fine frequency grid on which [`Welch::expected`] should sample S.
    pub fn expectation_grid(&self, half_width_bins: usize, oversample: usize) -> (Vec<f64>, f64) {
        let dw = self.bin_width();
        let step = dw / oversample as f64;
        let lo = self.omega.first().copied().unwrap_or(0.0) - half_width_bins as f64 * dw;
        let hi = self.omega.last().copied().unwrap_or(0.0) + half_width_bins as f64 * dw;
        let n = ((hi - lo) / step).round() as usize + 1;
        ((0..n).map(|i| lo + i as f64 * step).collect(), step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_lands_in_one_bin() {
        let dt = 0.01;
        let l = 1024;
        let w = Welch::new(WelchConfig { segment_len: l, band: (0.0, 100.0) }, dt).unwrap();
        let k0 = 37;
        let w0 = k0 as f64 * w.bin_width();
        let x: Vec<Complex64> = (0..4 * l).map(|j| Complex64::from_polar(1.0, -w0 * j as f64 * dt)).collect();
        let mut acc = w.empty();
        w.accumulate(&mut acc, &x).unwrap();
        let m = acc.mean();
        let (imax, _) = m.iter().enumerate().fold((0, 0.0), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        assert!((w.omega()[imax] - w0).abs() < 1e-9);
        let total: f64 = m.iter().sum();
        assert!(m[imax] / total > 0.6);
        assert!(m[imax + 3] / m[imax] < 1e-20);
    }

    #[test]
    fn window_response_matches_direct_sum() {
        let dt = 0.05;
        let w = Welch::new(WelchConfig { segment_len: 64, band: (0.0, 10.0) }, dt).unwrap();
        let win = hann(64);
        for nu in [0.0, 0.013, 1.9634954084936207, 3.7, -2.2] {
            let direct: Complex64 =
                win.iter().enumerate().map(|(j, wj)| Complex64::from_polar(*wj, nu * j as f64 * dt)).sum();
            let got = w.window_response(nu);
            assert!(
                (got - direct.norm_sqr()).abs() < 1e-9 * direct.norm_sqr().max(1.0),
                "nu {nu}: {got} vs {}",
                direct.norm_sqr()
            );
        }
    }

    #[test]
    fn white_noise_expectation_is_flat() {
        let dt = 0.1;
        let w = Welch::new(WelchConfig { segment_len: 256, band: (0.5, 2.0) }, dt).unwrap();
        let (nu, step) = w.expectation_grid(40, 8);
        let s = vec![3.0; nu.len()];
        for e in w.expected(&s, &nu, step) {
            assert!((e - 3.0).abs() < 1e-3, "{e}");
        }
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let w = Welch::new(WelchConfig { segment_len: 128, band: (0.0, 1.0) }, 0.1).unwrap();
        let mut acc = w.empty();
        let x = vec![Complex64::new(0.0, 0.0); 100];
        assert!(matches!(w.accumulate(&mut acc, &x), Err(Error::Resolution(_))));
    }
}
