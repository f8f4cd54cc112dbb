//! Simulation and estimation toolkit for two-qubit noise spectroscopy by
//! spin-locking relaxometry.
//!
//! The library synthesizes spin-locking measurement data from Lindblad
//! master-equation models of two driven qubits under spatiotemporally
//! correlated dephasing noise, then reconstructs the full set of two-qubit
//! noise self- and cross-spectra via robust M-estimation with asymptotic
//! confidence intervals.
//!
//! All angular frequencies and spectral densities are in rad/s internally;
//! rates are in 1/s and times in seconds. Conversions to ordinary
//! frequencies (Hz) happen only at I/O boundaries.

pub mod confidence;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod noise;
pub mod qcore;

pub use error::{Error, Result};
