use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::engine::{segment_grid, Frame, FrameState, Observer, Propagation};
use super::state::WaveFunction;
use super::trajectory::{Recorder, Trajectory};
use super::DrivenSystem;
use crate::error::{Error, Result};
use crate::model::{effective_coupling, Chain};

/// Time-averaged interaction-frame Hamiltonian for drive prefactor
/// `amplitude`: zero diagonal, hopping `J_eff,n / 2`.
pub fn effective_hamiltonian(chain: &Chain, amplitude: f64, omega: f64) -> DMatrix<f64> {
    let dim = chain.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for (n, &j) in chain.couplings.iter().enumerate() {
        let value = 0.5 * effective_coupling(j, chain.splittings[n], chain.splittings[n + 1], amplitude, omega);
        h[(n + 1, n + 2)] = value;
        h[(n + 2, n + 1)] = value;
    }
    h
}

/// Piecewise-static evolution under the effective Hamiltonian, exponentiated
/// exactly per stage through its eigendecomposition.
///
/// Averaging `exp(i db Phi(t))` over a stage that starts at `t_k` yields
/// `J0(a db / omega) exp(i db chi_k)` with `chi_k = Phi(t_k) - a sin(omega t_k) / omega`;
/// the phase is a gauge `diag(exp(i b_n chi_k))` applied around the real
/// symmetric propagator.
pub fn propagate_effective_observed(
    psi0: &WaveFunction,
    system: &DrivenSystem,
    options: &Propagation,
    observer: &mut dyn Observer,
) -> Result<WaveFunction> {
    let chain = &system.chain;
    let schedule = &system.schedule;
    let dim = chain.dim();
    if psi0.dim() != dim {
        return Err(Error::InvalidState(format!(
            "state dimension {} does not match chain dimension {dim}",
            psi0.dim()
        )));
    }
    WaveFunction::new(psi0.amplitudes.clone())?;
    if schedule.segments().is_empty() || options.samples_per_stage == 0 || !(options.dt_max > 0.0) {
        return Err(Error::InvalidArgument("empty schedule or invalid sampling".to_string()));
    }
    let omega = schedule.omega();
    let dense_after = options.dense_after.unwrap_or(f64::INFINITY);

    let first = schedule.segments()[0];
    let phase0 = schedule.phase_in(0, first.start);
    let mut d: Vec<Complex64> = psi0
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, c)| Complex64::from_polar(1.0, chain.splitting(k) * phase0) * c)
        .collect();
    let drift = |d: &[Complex64]| d.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0;
    observer.observe(&Frame::new(first.start, true, drift(&d), phase0, chain, FrameState::Pure(&d)));

    let mut cache: Vec<(u64, SymmetricEigen<f64, nalgebra::Dyn>)> = Vec::new();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); dim];
    let mut out = vec![Complex64::new(0.0, 0.0); dim];

    for (index, segment) in schedule.segments().iter().enumerate() {
        let key = segment.amplitude.to_bits();
        if !cache.iter().any(|(k, _)| *k == key) {
            let h = effective_hamiltonian(chain, segment.amplitude, omega);
            cache.push((key, SymmetricEigen::new(h)));
        }
        let eig = &cache.iter().find(|(k, _)| *k == key).expect("cached").1;
        let chi = segment.phase_at_start - segment.amplitude * (omega * segment.start).sin() / omega;
        let gauge: Vec<Complex64> = (0..dim)
            .map(|k| Complex64::from_polar(1.0, chain.splitting(k) * chi))
            .collect();
        // coeffs = V^T G^dagger d
        for (a, c) in coeffs.iter_mut().enumerate() {
            *c = (0..dim)
                .map(|k| eig.eigenvectors[(k, a)] * gauge[k].conj() * d[k])
                .sum();
        }
        let grid = segment_grid(segment.duration(), options);
        for j in 1..=grid.steps {
            let t = if j == grid.steps {
                segment.end
            } else {
                segment.start + j as f64 * grid.h
            };
            let sample = grid.sample[j] || t >= dense_after;
            if !(sample || j == grid.steps) {
                continue;
            }
            let tau = t - segment.start;
            for (k, o) in out.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..dim {
                    acc += eig.eigenvectors[(k, a)] * Complex64::from_polar(1.0, -eig.eigenvalues[a] * tau) * coeffs[a];
                }
                *o = gauge[k] * acc;
            }
            let phase = schedule.phase_in(index, t);
            observer.observe(&Frame::new(t, sample, drift(&out), phase, chain, FrameState::Pure(&out)));
        }
        d.copy_from_slice(&out);
    }
    let phase = schedule.phase(schedule.t_final());
    Ok(WaveFunction::from_raw(
        d.iter()
            .enumerate()
            .map(|(k, c)| Complex64::from_polar(1.0, -chain.splitting(k) * phase) * c)
            .collect(),
    ))
}

pub fn propagate_effective(psi0: &WaveFunction, system: &DrivenSystem, options: &Propagation) -> Result<Trajectory> {
    let mut recorder = Recorder::new(system.chain.include_alice);
    let final_state = propagate_effective_observed(psi0, system, options, &mut recorder)?;
    Ok(recorder.finish_pure(final_state))
}
