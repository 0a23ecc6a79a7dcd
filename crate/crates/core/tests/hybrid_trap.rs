use num_complex::Complex64;
use optomod_core::hybrid::HybridTrap;
use optomod_core::iterative::{iterative_spectrum, shifted_s_yy, Susceptibilities};
use optomod_core::psd::{Welch, WelchConfig};
use optomod_core::spectra::{
    heterodyne_cross, linear_grid, sideband_grid, sideband_ratio, spectral_component, spectrum_floquet,
    spectrum_floquet_periodic, spectrum_shifted, spectrum_shifted_periodic,
};
use optomod_core::stochastic::{
    binned_ratio, effective_step, expected_psd, semiclassical_analytic, sideband_bins, simulate_psd, Observable,
    SdeConfig,
};
use optomod_core::transfer::translation_residual;
use optomod_core::{CMat, Error};

fn y_ratio(p: &HybridTrap, k: usize) -> f64 {
    let grid = sideband_grid(1.0, p.omega_d, 201);
    let s = shifted_s_yy(p, &grid, k).unwrap();
    sideband_ratio(&s, 1.0, p.omega_d).unwrap().ratio
}

#[test]
fn shifted_and_floquet_agree_on_the_weak_presets() {
    let grid = linear_grid(0.5, 1.5, 257);
    for r in [0.05, 0.2, 0.5] {
        let p = HybridTrap::fig2a(r);
        let (series, noise) = (p.series().unwrap(), p.noise().unwrap());
        let a = spectrum_shifted(&series, &noise, &grid, 20).unwrap();
        let b = spectrum_floquet(&series, &noise, &grid, 20).unwrap();
        let dev = a.max_relative_deviation(&b).unwrap();
        assert!(dev < 1e-9, "ratio {r}: {dev}");
    }
}

#[test]
fn without_frequency_modulation_only_the_cavity_filter_splits_the_heights() {
    // y(1 ± ω_d) is fed by the single mechanical peak at 1 through η(ω), so the
    // ratio is close to |η(1 + ω_d)|² / |η(1 − ω_d)|² rather than exactly 1.
    let p = HybridTrap::fig2a(0.0);
    let chi = Susceptibilities::of(&p);
    let filter = chi.eta(1.0 + p.omega_d).norm_sqr() / chi.eta(1.0 - p.omega_d).norm_sqr();
    let r = y_ratio(&p, 24);
    assert!((r - filter).abs() < 0.02, "{r} vs {filter}");
    let it = iterative_spectrum(&p, &sideband_grid(1.0, p.omega_d, 201), 3).unwrap();
    let ri = sideband_ratio(&it, 1.0, p.omega_d).unwrap().ratio;
    assert!((ri - r).abs() < 1e-4, "{ri} vs {r}");
}

#[test]
fn upper_sideband_fades_as_the_frequency_modulation_grows() {
    let ratios: Vec<f64> = [0.05, 0.5, 0.9].iter().map(|&r| y_ratio(&HybridTrap::fig2a(r), 24)).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    let near_root2 = y_ratio(&HybridTrap::fig2a(std::f64::consts::SQRT_2), 32);
    assert!(near_root2 < 0.05, "{near_root2}");
}

#[test]
fn iterative_peaks_track_the_full_solution_for_gentle_modulation() {
    let p = HybridTrap::fig2a(0.5);
    let grid = sideband_grid(1.0, p.omega_d, 201);
    let full = shifted_s_yy(&p, &grid, 24).unwrap();
    let it = iterative_spectrum(&p, &grid, 3).unwrap();
    let rf = sideband_ratio(&full, 1.0, p.omega_d).unwrap();
    let ri = sideband_ratio(&it, 1.0, p.omega_d).unwrap();
    assert!((rf.upper.height - ri.upper.height).abs() / rf.upper.height < 0.05);
    assert!((rf.lower.height - ri.lower.height).abs() / rf.lower.height < 0.05);
}

#[test]
fn heterodyne_cross_is_a_shifted_spectral_component() {
    let p = HybridTrap::fig2a(0.5);
    let (series, noise) = (p.series().unwrap(), p.noise().unwrap());
    let beat = p.omega_d;
    let grid = linear_grid(0.9, 1.1, 21);
    let c = heterodyne_cross(&series, &noise, beat, &grid, 12).unwrap();
    let plus: Vec<f64> = grid.iter().map(|w| w + beat).collect();
    let s = spectral_component(&series, &noise, &plus, 12, -2).unwrap();
    let dev = s.max_relative_deviation(&c).unwrap();
    assert!(dev < 1e-10, "{dev}");
    assert!(matches!(heterodyne_cross(&series, &noise, 0.3 * beat, &grid, 12), Err(Error::Resonance { .. })));
}

#[test]
fn periodic_noise_routes_agree() {
    let p = HybridTrap::fig2a(0.5);
    let (series, noise) = (p.series().unwrap(), p.noise().unwrap());
    let d = series.dim();
    let mut comps = vec![(0, noise.n_matrix())];
    for (l, scale) in [(1i64, 0.3), (-1, 0.3), (2, 0.1), (-2, 0.1)] {
        let mut n = CMat::zeros(d, d);
        n[(0, 0)] = Complex64::new(scale, 0.0);
        n[(2, 2)] = Complex64::new(scale * 1e3, 0.0);
        comps.push((l, n));
    }
    let grid = linear_grid(0.9, 1.1, 41);
    let a = spectrum_shifted_periodic(&series, &noise, &comps, &grid, 24).unwrap();
    let b = spectrum_floquet_periodic(&series, &noise, &comps, &grid, 24).unwrap();
    let dev = a.max_relative_deviation(&b).unwrap();
    assert!(dev < 1e-9, "{dev}");
}

#[test]
fn interior_translation_residual_is_small_once_converged() {
    let p = HybridTrap::fig2a(0.5);
    let (series, noise) = (p.series().unwrap(), p.noise().unwrap());
    let r = translation_residual(&series, &noise, 1.0, 24, 1).unwrap();
    assert!(r.relative() < 1e-8, "{}", r.relative());
}

#[test]
fn semiclassical_noise_approaches_quantum_noise_for_hot_baths() {
    let p = HybridTrap::fig2a(0.5);
    let (series, noise) = (p.series().unwrap(), p.noise().unwrap());
    let grid = linear_grid(0.9, 1.1, 41);
    let q = spectrum_shifted(&series, &noise, &grid, 12).unwrap().quadrature(1, 0.0).unwrap();
    let sc = semiclassical_analytic(&series, &noise, &grid, 12).unwrap().quadrature(1, 0.0).unwrap();
    // The hot mechanical bath dominates; what is left is the cold optical bath,
    // whose symmetrised weight n̄ + ½ differs from n̄ + 1 and n̄ by ½.
    let dev = q.max_relative_deviation(&sc).unwrap();
    assert!(dev < 1e-4, "{dev}");
    let (nq, ns) = (noise.n_matrix(), noise.semiclassical().n_matrix());
    for i in [2, 3] {
        let rel = ((nq[(i, i)] - ns[(i, i)]) / ns[(i, i)]).norm();
        assert!(rel <= 0.5 / (p.n_b + 0.5) * (1.0 + 1e-12), "{rel}");
    }
}

#[test]
fn short_simulation_reproduces_split_sidebands() {
    let p = HybridTrap::fig2a(0.5);
    let (series, noise) = (p.series().unwrap(), p.noise().unwrap());
    let cfg = WelchConfig { segment_len: 1 << 17, band: (0.9, 1.1) };
    let mut sde = SdeConfig::new(0.0, vec![Observable::position(0)]);
    let (dt, _) = effective_step(&series, sde.dt);
    sde.t_sim = dt * 10.0 * (1 << 16) as f64;
    sde.burn_in = 4000.0;
    sde.ensemble = 4;
    sde.seed = 7;
    let ens = simulate_psd(&series, &noise, &sde, cfg).unwrap();
    let welch = Welch::new(cfg, ens.dt).unwrap();
    let want = expected_psd(&series, &noise, &welch, Observable::position(0), 12).unwrap();
    let o = &ens.observables[0];
    let bins = sideband_bins(&ens.omega, &want, 1.0, p.omega_d).unwrap();
    let sim = binned_ratio(&o.mean, Some(&o.stderr), bins);
    let exp = binned_ratio(&want, None, bins);
    assert!(sim.ratio < 0.6, "upper sideband should be suppressed: {}", sim.ratio);
    assert!((sim.ratio - exp.ratio).abs() < 3.0 * sim.stderr, "{} ± {} vs {}", sim.ratio, sim.stderr, exp.ratio);
}
