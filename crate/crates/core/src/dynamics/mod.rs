//! Propagation of the driven chain in the single-excitation subspace.
//!
//! The drive is diagonal in the site basis, so its phase is integrated
//! analytically and the integrators work in the interaction frame
//! `c_n = exp(-i b_n Phi(t)) d_n`, where the hopping between sites `n` and
//! `n + 1` becomes `(J_n / 2) exp(i (b_n - b_{n+1}) Phi(t))`. The frame
//! change is exact; it keeps the integrated generator bounded by `J` no
//! matter how large the drive amplitude is. Every observable handed out is
//! converted back to the lab frame.

mod effective;
mod engine;
mod state;
mod trajectory;

pub use effective::{effective_hamiltonian, propagate_effective, propagate_effective_observed};
pub use engine::{
    propagate_lindblad, propagate_lindblad_observed, propagate_pure, propagate_pure_observed, Frame, Observer,
    Propagation, DRIFT_ABORT,
};
pub use state::{DensitySnapshot, SubspaceDensity, WaveFunction};
pub use trajectory::{Samples, Trajectory};

use crate::model::{Chain, ChainSpec, DriveProtocol, Schedule};

/// A realized chain together with the drive acting on it.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivenSystem {
    pub chain: Chain,
    pub schedule: Schedule,
}

impl DrivenSystem {
    pub fn new(chain: Chain, schedule: Schedule) -> Self {
        Self { chain, schedule }
    }

    /// Error-free chain and nominal schedule on `[0, t_final]`.
    pub fn nominal(spec: &ChainSpec, protocol: &DriveProtocol, t_final: f64) -> Self {
        Self {
            chain: spec.realize(),
            schedule: protocol.schedule(spec, t_final),
        }
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn t_final(&self) -> f64 {
        self.schedule.t_final()
    }
}
