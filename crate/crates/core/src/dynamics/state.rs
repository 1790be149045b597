use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for initial states.
pub const STATE_TOLERANCE: f64 = 1e-9;

/// Amplitudes `c_0..c_N` over the single-excitation basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFunction {
    pub amplitudes: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let psi = Self { amplitudes };
        let drift = (psi.norm_sqr() - 1.0).abs();
        if drift > STATE_TOLERANCE {
            return Err(Error::InvalidState(format!("state is not normalized (|norm^2 - 1| = {drift:e})")));
        }
        Ok(psi)
    }

    /// Unchecked constructor for propagated states.
    pub(crate) fn from_raw(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    /// All weight on basis index `site`.
    pub fn localized(dim: usize, site: usize) -> Result<Self> {
        if site >= dim {
            return Err(Error::InvalidState(format!("site {site} outside basis of size {dim}")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[site] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    /// `(|0> + |site>) / sqrt(2)`.
    pub fn bell(dim: usize, site: usize) -> Result<Self> {
        let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::superposition(dim, site, amp, amp)
    }

    /// `alpha |0> + beta |site>`; with index 0 the chain vacuum this is a
    /// qubit state `alpha|0> + beta|1>` loaded into chain site `site`.
    pub fn superposition(dim: usize, site: usize, alpha: Complex64, beta: Complex64) -> Result<Self> {
        if site == 0 || site >= dim {
            return Err(Error::InvalidState(format!("site {site} outside 1..{dim}")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[0] = alpha;
        amplitudes[site] = beta;
        Self::new(amplitudes)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.amplitudes[k].norm_sqr()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Density matrix over the single-excitation basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDensity {
    pub rho: DMatrix<Complex64>,
    /// Index 0 differs from every chain state in Alice's qubit as well, which
    /// then dephases too.
    pub dephase_alice: bool,
}

impl SubspaceDensity {
    pub fn new(rho: DMatrix<Complex64>, dephase_alice: bool) -> Result<Self> {
        let density = Self { rho, dephase_alice };
        density.validate()?;
        Ok(density)
    }

    pub(crate) fn from_raw(rho: DMatrix<Complex64>, dephase_alice: bool) -> Self {
        Self { rho, dephase_alice }
    }

    pub fn from_pure(psi: &WaveFunction, dephase_alice: bool) -> Self {
        let c = nalgebra::DVector::from_column_slice(&psi.amplitudes);
        Self {
            rho: &c * c.adjoint(),
            dephase_alice,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.rho.shape();
        if rows != cols || rows < 2 {
            return Err(Error::InvalidState(format!("density matrix has shape {rows}x{cols}")));
        }
        let drift = (self.trace() - 1.0).abs();
        if drift > STATE_TOLERANCE {
            return Err(Error::InvalidState(format!("trace deviates from 1 by {drift:e}")));
        }
        let asym = (&self.rho - self.rho.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if asym > STATE_TOLERANCE {
            return Err(Error::InvalidState(format!("density matrix not Hermitian ({asym:e})")));
        }
        for k in 0..rows {
            let p = self.rho[(k, k)].re;
            if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(Error::InvalidState(format!("population {p} at index {k} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|k| self.rho[(k, k)].re).sum()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.rho[(k, k)].re
    }

    /// `rho_{k0}`, the coherence between index `k` and the reference index 0.
    pub fn coherence(&self, k: usize) -> Complex64 {
        self.rho[(k, 0)]
    }

    pub fn snapshot(&self) -> DensitySnapshot {
        DensitySnapshot {
            populations: (0..self.dim()).map(|k| self.population(k)).collect(),
            coherences: (0..self.dim()).map(|k| self.coherence(k)).collect(),
        }
    }
}

/// The part of a density matrix every figure of merit needs: populations
/// and the coherences `rho_{k0}` with index 0. Stored per trajectory sample
/// instead of the full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub populations: Vec<f64>,
    pub coherences: Vec<Complex64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized() {
        assert!(WaveFunction::new(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn bell_is_normalized() {
        let psi = WaveFunction::bell(14, 7).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-15);
        assert!((psi.population(7) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn density_from_pure_is_valid() {
        let psi = WaveFunction::superposition(4, 2, Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)).unwrap();
        let rho = SubspaceDensity::from_pure(&psi, false);
        rho.validate().unwrap();
        assert!((rho.coherence(2) - Complex64::new(0.0, 0.8) * 0.6).norm() < 1e-15);
    }
}
