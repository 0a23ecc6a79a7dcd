//! The doubly modulated hybrid-trap system: one optical mode coupled to one
//! mechanical mode with g(t) = 2ḡ sin(ω_d t), ω_M(t) = ω̄_M + 2ω_2 cos(2ω_d t)
//! and Δ(t) = Δ̄ + 2Δ_2 cos(2ω_d t).

use crate::error::Result;
use crate::model::{
    CouplingSpec, HamiltonianFourierSeries, ModeSpec, ModulationSpec, ModulationTarget, NoiseModel, SystemSpec,
};

/// Mechanical reference frequency (Hz) used to convert temperatures and
/// physical rates into dimensionless units.
pub const REFERENCE_FREQUENCY_HZ: f64 = 925e3;
pub const ROOM_TEMPERATURE_K: f64 = 300.0;

const BOLTZMANN: f64 = 1.380649e-23;
const PLANCK: f64 = 6.62607015e-34;

/// Bose–Einstein occupation of a mode at `frequency_hz`.
pub fn thermal_occupation(temperature_k: f64, frequency_hz: f64) -> f64 {
    if temperature_k <= 0.0 {
        return 0.0;
    }
    1.0 / (PLANCK * frequency_hz / (BOLTZMANN * temperature_k)).exp_m1()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridTrap {
    pub g_bar: f64,
    /// Unmodulated coupling added to g(t); zero for the trap itself.
    pub static_g: f64,
    pub omega_m: f64,
    pub omega2: f64,
    pub omega_d: f64,
    pub detuning: f64,
    pub detuning2: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub n_a: f64,
    pub n_b: f64,
}

impl HybridTrap {
    /// Split-sideband configuration with ω_d = 0.05, cavity cooling at
    /// Δ̄ = −ω̄_M, κ = ω̄_M and a room-temperature mechanical bath.
    pub fn fig2a(ratio: f64) -> Self {
        let omega_d = 0.05;
        HybridTrap {
            g_bar: 0.02,
            static_g: 0.0,
            omega_m: 1.0,
            omega2: ratio * omega_d,
            omega_d,
            detuning: -1.0,
            detuning2: 0.0,
            kappa: 1.0,
            gamma_m: 2.3e-5,
            n_a: 0.0,
            n_b: thermal_occupation(ROOM_TEMPERATURE_K, REFERENCE_FREQUENCY_HZ),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.omega2 / self.omega_d
    }

    /// C = 4ḡ²/(κΓ_M).
    pub fn cooperativity(&self) -> f64 {
        4.0 * self.g_bar * self.g_bar / (self.kappa * self.gamma_m)
    }

    /// ḡ giving cooperativity `c` at the current κ and Γ_M.
    pub fn with_cooperativity(mut self, c: f64) -> Self {
        self.g_bar = (c * self.kappa * self.gamma_m / 4.0).sqrt();
        self
    }

    pub fn system(&self) -> SystemSpec {
        let mut modulations = Vec::new();
        if self.g_bar != 0.0 {
            modulations.push(ModulationSpec::sine(ModulationTarget::Coupling(0), 1, self.g_bar));
        }
        if self.omega2 != 0.0 {
            modulations.push(ModulationSpec::cosine(ModulationTarget::Frequency(1), 2, self.omega2));
        }
        if self.detuning2 != 0.0 {
            modulations.push(ModulationSpec::cosine(ModulationTarget::Frequency(0), 2, self.detuning2));
        }
        SystemSpec {
            modes: vec![
                ModeSpec::optical("cavity", self.detuning, self.kappa, self.n_a),
                ModeSpec::mechanical("mechanics", self.omega_m, self.gamma_m, self.n_b),
            ],
            couplings: vec![CouplingSpec { first: 0, second: 1, g: self.static_g }],
            modulations,
            drive_frequency: self.omega_d,
        }
    }

    pub fn series(&self) -> Result<HamiltonianFourierSeries> {
        self.system().fourier_series()
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        self.system().noise()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn room_temperature_occupation() {
        let n = thermal_occupation(300.0, REFERENCE_FREQUENCY_HZ);
        assert!((n - 6.7578e6).abs() / 6.7578e6 < 1e-3, "{n}");
        assert_eq!(thermal_occupation(0.0, 1e6), 0.0);
    }

    #[test]
    fn preset_harmonics() {
        let p = HybridTrap::fig2a(0.9);
        assert!((p.omega2 - 0.045).abs() < 1e-15);
        let s = p.series().unwrap();
        assert_eq!(s.max_harmonic(), 2);
        let p0 = HybridTrap::fig2a(0.0);
        assert_eq!(p0.series().unwrap().max_harmonic(), 1);
    }

    #[test]
    fn cooperativity_round_trip() {
        let p = HybridTrap::fig2a(0.5).with_cooperativity(1e3);
        assert!((p.cooperativity() - 1e3).abs() < 1e-9);
    }
}
