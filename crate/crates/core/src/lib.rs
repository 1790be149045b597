//! Simulation and analysis of quantum-information routing in ac-driven
//! qubit chains.
//!
//! A ratchet-shaped splitting profile combined with a two-stage ac drive
//! suppresses tunneling on alternating bonds (coherent destruction of
//! tunneling), which moves a single excitation two sites per drive cycle in
//! a direction chosen by the drive's phase. The crate propagates the
//! single-excitation dynamics, with or without pure dephasing, and evaluates
//! concurrence and state-transfer fidelity, including Monte Carlo studies of
//! fabrication errors.

pub mod bessel;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
