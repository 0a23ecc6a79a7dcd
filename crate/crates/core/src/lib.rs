//! Quantum noise spectra of periodically modulated, linearized optomechanical
//! systems.
//!
//! Three analytic routes are provided and cross-checked against each other:
//! the frequency-shifted-operator transfer matrix ([`spectra::spectrum_shifted`]),
//! the Floquet-mode transfer matrix ([`spectra::spectrum_floquet`]) and a
//! low-order iterative substitution ([`iterative::iterative_spectrum`]).
//! A semiclassical Langevin simulator ([`stochastic`]) acts as an independent
//! numerical oracle.
//!
//! Frequencies are dimensionless, in units of the mean mechanical frequency.
//! Operators are ordered `(a_1, a_1†, …, a_n, a_n†)` with optical modes first.

pub mod banded;
pub mod error;
pub mod hybrid;
pub mod iterative;
pub mod model;
pub mod psd;
pub mod spectra;
pub mod stochastic;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{
    build_fourier_series, drift_matrix, noise_matrix, CMat, CouplingSpec, HamiltonianFourierSeries, ModeKind, ModeSpec,
    ModulationSpec, ModulationTarget, NoiseModel, SymplecticForm, SystemSpec,
};
pub use spectra::{Method, SpectrumResult, SpectrumValues};
