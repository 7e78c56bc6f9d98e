//! Simulation core for measuring spectral form factors (SFF) of disordered
//! spin chains through QND coupling to a clock qubit.
//!
//! The crate is organized bottom-up:
//!
//! - [`models`]: spin Hamiltonians (XXZ chains, Ising layers, Floquet halves),
//!   disorder sampling and fixed-magnetization bases.
//! - [`spectra`]: dense eigendecompositions, propagators, Floquet operators,
//!   quasienergies and level spacings.
//! - [`sff`]: exact SFF curves, spectral filters, random-matrix baselines and
//!   the Thouless time.
//! - [`protocol`]: shot-level Monte Carlo of state preparation and SFF readout.
//! - [`rydberg`]: atomic parameters to effective spin couplings and the
//!   decoherence budget.

pub mod error;
pub mod models;
pub mod protocol;
pub mod rng;
pub mod rydberg;
pub mod sff;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};

/// Complex scalar used for all operator matrices.
pub type C64 = num_complex::Complex<f64>;
