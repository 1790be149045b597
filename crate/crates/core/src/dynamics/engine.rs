use std::f64::consts::PI;

use num_complex::Complex64;

use super::state::{DensitySnapshot, SubspaceDensity, WaveFunction};
use super::trajectory::{Recorder, Trajectory};
use super::DrivenSystem;
use crate::error::{Error, Result};
use crate::model::{Chain, Schedule};

/// Norm or trace drift that aborts a propagation.
pub const DRIFT_ABORT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Step-size and sampling controls shared by all propagators.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Largest integrator step. Each stage is split into equal steps no
    /// longer than this, so switches land on step endpoints.
    pub dt_max: f64,
    /// Recorded points per stage (stage ends and midpoints included).
    pub samples_per_stage: usize,
    /// Record every step from this time on.
    pub dense_after: Option<f64>,
}

impl Propagation {
    /// Steps of at most 1/512 of a carrier period.
    pub fn for_omega(omega: f64) -> Self {
        Self {
            dt_max: 2.0 * PI / omega / 512.0,
            samples_per_stage: 32,
            dense_after: None,
        }
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn with_samples_per_stage(mut self, samples: usize) -> Self {
        self.samples_per_stage = samples;
        self
    }

    pub fn with_dense_after(mut self, t: f64) -> Self {
        self.dense_after = Some(t);
        self
    }

    fn validate(&self, schedule: &Schedule) -> Result<()> {
        let limit = 2.0 * PI / schedule.omega() / 32.0;
        if !(self.dt_max > 0.0 && self.dt_max <= limit * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "dt_max = {} must lie in (0, {limit}] (1/32 of a carrier period)",
                self.dt_max
            )));
        }
        if self.samples_per_stage == 0 {
            return Err(Error::InvalidArgument("samples_per_stage must be >= 1".to_string()));
        }
        if schedule.segments().is_empty() {
            return Err(Error::InvalidArgument("empty schedule".to_string()));
        }
        Ok(())
    }
}

/// Receives the propagated state at `t = 0` and after every step.
pub trait Observer {
    fn observe(&mut self, frame: &Frame<'_>);
}

impl<F: FnMut(&Frame<'_>)> Observer for F {
    fn observe(&mut self, frame: &Frame<'_>) {
        self(frame)
    }
}

#[derive(Clone, Copy)]
pub(crate) enum FrameState<'a> {
    Pure(&'a [Complex64]),
    /// Row-major `dim x dim`.
    Mixed(&'a [Complex64]),
}

/// Lab-frame view of the state at one instant.
pub struct Frame<'a> {
    pub t: f64,
    /// Set on recorded sample points.
    pub sample: bool,
    /// `norm^2 - 1` (pure) or `trace - 1` (mixed).
    pub drift: f64,
    phase: f64,
    chain: &'a Chain,
    state: FrameState<'a>,
}

impl<'a> Frame<'a> {
    pub(crate) fn new(t: f64, sample: bool, drift: f64, phase: f64, chain: &'a Chain, state: FrameState<'a>) -> Self {
        Self {
            t,
            sample,
            drift,
            phase,
            chain,
            state,
        }
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.state, FrameState::Pure(_))
    }

    fn lab_factor(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, -self.chain.splitting(k) * self.phase)
    }

    pub fn population(&self, k: usize) -> f64 {
        match self.state {
            FrameState::Pure(d) => d[k].norm_sqr(),
            FrameState::Mixed(rho) => rho[k * self.dim() + k].re,
        }
    }

    /// Lab-frame amplitude `c_k`; `None` for mixed states.
    pub fn amplitude(&self, k: usize) -> Option<Complex64> {
        match self.state {
            FrameState::Pure(d) => Some(self.lab_factor(k) * d[k]),
            FrameState::Mixed(_) => None,
        }
    }

    /// Lab-frame coherence `rho_{k0}` (`c_k c_0^*` for pure states).
    pub fn coherence(&self, k: usize) -> Complex64 {
        match self.state {
            FrameState::Pure(d) => self.lab_factor(k) * d[k] * d[0].conj(),
            FrameState::Mixed(rho) => self.lab_factor(k) * rho[k * self.dim()],
        }
    }

    pub fn wavefunction(&self) -> Option<WaveFunction> {
        match self.state {
            FrameState::Pure(d) => Some(WaveFunction::from_raw(
                d.iter().enumerate().map(|(k, c)| self.lab_factor(k) * c).collect(),
            )),
            FrameState::Mixed(_) => None,
        }
    }

    pub fn snapshot(&self) -> DensitySnapshot {
        DensitySnapshot {
            populations: (0..self.dim()).map(|k| self.population(k)).collect(),
            coherences: (0..self.dim()).map(|k| self.coherence(k)).collect(),
        }
    }

    pub(crate) fn density(&self, dephase_alice: bool) -> SubspaceDensity {
        let dim = self.dim();
        let rho = match self.state {
            FrameState::Pure(_) => {
                let psi = self.wavefunction().expect("pure frame");
                return SubspaceDensity::from_pure(&psi, dephase_alice);
            }
            FrameState::Mixed(rho) => rho,
        };
        let factors: Vec<Complex64> = (0..dim).map(|k| self.lab_factor(k)).collect();
        let lab = nalgebra::DMatrix::from_fn(dim, dim, |n, m| factors[n] * rho[n * dim + m] * factors[m].conj());
        SubspaceDensity::from_raw(lab, dephase_alice)
    }
}

/// Equal steps per segment plus which step endpoints are sample points.
pub(crate) struct SegmentGrid {
    pub steps: usize,
    pub h: f64,
    pub sample: Vec<bool>,
}

pub(crate) fn segment_grid(duration: f64, options: &Propagation) -> SegmentGrid {
    // A whole number of steps between samples keeps the sample times
    // independent of dt_max.
    let per = options.samples_per_stage;
    let blocks = ((duration / (options.dt_max * per as f64)) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let steps = blocks * per;
    let sample = (0..=steps).map(|j| j % blocks == 0).collect();
    SegmentGrid {
        steps,
        h: duration / steps as f64,
        sample,
    }
}

/// Hopping amplitudes `(J_n / 2) exp(i (b_n - b_{n+1}) Phi)` of the
/// interaction-frame Hamiltonian.
///
/// Bond differences cluster around a few nominal values; one phasor is
/// evaluated per cluster and each bond is corrected by a short Taylor
/// factor in its small offset.
pub(crate) struct BondPhasors {
    centers: Vec<f64>,
    cluster: Vec<usize>,
    offsets: Vec<f64>,
    half_j: Vec<f64>,
    diffs: Vec<f64>,
    center_phasors: Vec<Complex64>,
}

/// Offsets `|(db - center) Phi|` below this use the Taylor factor; the
/// truncation error is below `LIMIT^5 / 120`.
const TAYLOR_LIMIT: f64 = 1e-3;

impl BondPhasors {
    pub fn new(chain: &Chain) -> Self {
        let n_bonds = chain.n_sites() - 1;
        let mut centers: Vec<f64> = Vec::new();
        let mut cluster = Vec::with_capacity(n_bonds);
        let mut offsets = Vec::with_capacity(n_bonds);
        let mut diffs = Vec::with_capacity(n_bonds);
        for n in 0..n_bonds {
            let db = chain.splittings[n] - chain.splittings[n + 1];
            let found = centers.iter().position(|c| (db - c).abs() <= 1e-6 * c.abs().max(1.0));
            let index = found.unwrap_or_else(|| {
                centers.push(db);
                centers.len() - 1
            });
            cluster.push(index);
            offsets.push(db - centers[index]);
            diffs.push(db);
        }
        Self {
            center_phasors: vec![ZERO; centers.len()],
            centers,
            cluster,
            offsets,
            half_j: chain.couplings.iter().map(|j| 0.5 * j).collect(),
            diffs,
        }
    }

    pub fn evaluate(&mut self, phase: f64, out: &mut [Complex64]) {
        for (p, c) in self.center_phasors.iter_mut().zip(&self.centers) {
            let (sin, cos) = (c * phase).sin_cos();
            *p = Complex64::new(cos, sin);
        }
        for (n, w) in out.iter_mut().enumerate() {
            let e = self.offsets[n] * phase;
            let rotation = if e == 0.0 {
                Complex64::new(1.0, 0.0)
            } else if e.abs() < TAYLOR_LIMIT {
                let e2 = e * e;
                Complex64::new(1.0 - e2 / 2.0 + e2 * e2 / 24.0, e * (1.0 - e2 / 6.0))
            } else {
                let (sin, cos) = (self.diffs[n] * phase).sin_cos();
                *w = Complex64::new(self.half_j[n] * cos, self.half_j[n] * sin);
                continue;
            };
            *w = self.center_phasors[self.cluster[n]] * rotation * self.half_j[n];
        }
    }
}

fn pure_rhs(w: &[Complex64], d: &[Complex64], out: &mut [Complex64]) {
    let n_sites = d.len() - 1;
    out[0] = ZERO;
    for k in 1..=n_sites {
        let mut acc = ZERO;
        if k >= 2 {
            acc += w[k - 2].conj() * d[k - 1];
        }
        if k < n_sites {
            acc += w[k - 1] * d[k + 1];
        }
        // -i * acc
        out[k] = Complex64::new(acc.im, -acc.re);
    }
}

/// Number of qubits in which basis states `n` and `m` differ.
pub(crate) fn dephasing_distance(n: usize, m: usize, dephase_alice: bool) -> f64 {
    if n == m {
        0.0
    } else if n == 0 || m == 0 {
        if dephase_alice {
            2.0
        } else {
            1.0
        }
    } else {
        2.0
    }
}

fn lindblad_rhs(dim: usize, w: &[Complex64], rates: &[f64], rho: &[Complex64], out: &mut [Complex64]) {
    let n_sites = dim - 1;
    for n in 0..dim {
        let row = n * dim;
        for m in n..dim {
            let mut acc = ZERO;
            if n >= 2 {
                acc += w[n - 2].conj() * rho[row - dim + m];
            }
            if n >= 1 && n < n_sites {
                acc += w[n - 1] * rho[row + dim + m];
            }
            if m >= 2 {
                acc -= rho[row + m - 1] * w[m - 2];
            }
            if m >= 1 && m < n_sites {
                acc -= rho[row + m + 1] * w[m - 1].conj();
            }
            let value = Complex64::new(acc.im, -acc.re) - rho[row + m] * rates[row + m];
            if m == n {
                out[row + m] = Complex64::new(value.re, 0.0);
            } else {
                out[row + m] = value;
                out[m * dim + n] = value.conj();
            }
        }
    }
}

/// Classical fourth-order Runge-Kutta over the schedule, one equal-step
/// subdivision per segment.
fn integrate<R>(
    system: &DrivenSystem,
    options: &Propagation,
    state: &mut Vec<Complex64>,
    rhs: R,
    drift_of: fn(&[Complex64], usize) -> f64,
    is_pure: bool,
    observer: &mut dyn Observer,
) -> Result<()>
where
    R: Fn(&[Complex64], &[Complex64], &mut [Complex64]),
{
    options.validate(&system.schedule)?;
    let chain = &system.chain;
    let schedule = &system.schedule;
    let dim = chain.dim();
    let n_bonds = chain.n_sites() - 1;
    let len = state.len();

    let mut k1 = vec![ZERO; len];
    let mut k2 = vec![ZERO; len];
    let mut k3 = vec![ZERO; len];
    let mut k4 = vec![ZERO; len];
    let mut trial = vec![ZERO; len];
    let mut w_start = vec![ZERO; n_bonds];
    let mut w_mid = vec![ZERO; n_bonds];
    let mut w_end = vec![ZERO; n_bonds];
    let mut phasors = BondPhasors::new(chain);

    fn view(is_pure: bool, s: &[Complex64]) -> FrameState<'_> {
        if is_pure {
            FrameState::Pure(s)
        } else {
            FrameState::Mixed(s)
        }
    }
    let dense_after = options.dense_after.unwrap_or(f64::INFINITY);

    let t0 = schedule.segments()[0].start;
    let drift0 = drift_of(state, dim);
    observer.observe(&Frame::new(t0, true, drift0, schedule.phase_in(0, t0), chain, view(is_pure, state)));

    for (index, segment) in schedule.segments().iter().enumerate() {
        let grid = segment_grid(segment.duration(), options);
        let h = grid.h;
        phasors.evaluate(schedule.phase_in(index, segment.start), &mut w_start);
        for j in 1..=grid.steps {
            let t = segment.start + (j - 1) as f64 * h;
            let t_next = if j == grid.steps {
                segment.end
            } else {
                segment.start + j as f64 * h
            };
            let phase_end = schedule.phase_in(index, t_next);
            phasors.evaluate(schedule.phase_in(index, 0.5 * (t + t_next)), &mut w_mid);
            phasors.evaluate(phase_end, &mut w_end);

            rhs(&w_start, state, &mut k1);
            for i in 0..len {
                trial[i] = state[i] + 0.5 * h * k1[i];
            }
            rhs(&w_mid, &trial, &mut k2);
            for i in 0..len {
                trial[i] = state[i] + 0.5 * h * k2[i];
            }
            rhs(&w_mid, &trial, &mut k3);
            for i in 0..len {
                trial[i] = state[i] + h * k3[i];
            }
            rhs(&w_end, &trial, &mut k4);
            let sixth = h / 6.0;
            for i in 0..len {
                state[i] += sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
            std::mem::swap(&mut w_start, &mut w_end);

            let drift = drift_of(state, dim);
            if drift.abs() > DRIFT_ABORT {
                return Err(if is_pure {
                    Error::NormDrift { drift, time: t_next, step: h }
                } else {
                    Error::TraceDrift { drift, time: t_next, step: h }
                });
            }
            let sample = grid.sample[j] || t_next >= dense_after;
            observer.observe(&Frame::new(t_next, sample, drift, phase_end, chain, view(is_pure, state)));
        }
    }
    Ok(())
}

fn norm_drift(d: &[Complex64], _dim: usize) -> f64 {
    d.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0
}

fn trace_drift(rho: &[Complex64], dim: usize) -> f64 {
    (0..dim).map(|k| rho[k * dim + k].re).sum::<f64>() - 1.0
}

fn to_interaction_frame(system: &DrivenSystem, amplitudes: &[Complex64]) -> Vec<Complex64> {
    let phase = system.schedule.phase(system.schedule.segments()[0].start);
    amplitudes
        .iter()
        .enumerate()
        .map(|(k, c)| Complex64::from_polar(1.0, system.chain.splitting(k) * phase) * c)
        .collect()
}

/// Schrödinger evolution `i dc/dt = H(t) c` with observer callbacks; returns
/// the final lab-frame state.
pub fn propagate_pure_observed(
    psi0: &WaveFunction,
    system: &DrivenSystem,
    options: &Propagation,
    observer: &mut dyn Observer,
) -> Result<WaveFunction> {
    if psi0.dim() != system.dim() {
        return Err(Error::InvalidState(format!(
            "state dimension {} does not match chain dimension {}",
            psi0.dim(),
            system.dim()
        )));
    }
    WaveFunction::new(psi0.amplitudes.clone())?;
    let mut state = to_interaction_frame(system, &psi0.amplitudes);
    let mut last = None;
    {
        let mut wrapped = |frame: &Frame<'_>| {
            observer.observe(frame);
            if frame.t >= system.t_final() {
                last = frame.wavefunction();
            }
        };
        integrate(system, options, &mut state, pure_rhs, norm_drift, true, &mut wrapped)?;
    }
    Ok(last.expect("final frame observed"))
}

/// Schrödinger evolution recorded into a [`Trajectory`].
pub fn propagate_pure(psi0: &WaveFunction, system: &DrivenSystem, options: &Propagation) -> Result<Trajectory> {
    let mut recorder = Recorder::new(system.chain.include_alice);
    let final_state = propagate_pure_observed(psi0, system, options, &mut recorder)?;
    Ok(recorder.finish_pure(final_state))
}

/// Dephasing master equation with observer callbacks; returns the final
/// lab-frame density matrix.
///
/// The dissipator damps `rho_{nm}` at rate `gamma` times the number of
/// qubits in which `n` and `m` differ. It is diagonal in the site basis and
/// therefore identical in the lab and interaction frames.
pub fn propagate_lindblad_observed(
    rho0: &SubspaceDensity,
    system: &DrivenSystem,
    gamma: f64,
    options: &Propagation,
    observer: &mut dyn Observer,
) -> Result<SubspaceDensity> {
    let dim = system.dim();
    if rho0.dim() != dim {
        return Err(Error::InvalidState(format!(
            "density dimension {} does not match chain dimension {dim}",
            rho0.dim()
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    if rho0.dephase_alice && !system.chain.include_alice {
        return Err(Error::InvalidState(
            "dephase_alice requires basis index 0 to be Alice's qubit".to_string(),
        ));
    }
    rho0.validate()?;

    let phase0 = system.schedule.phase(system.schedule.segments()[0].start);
    let factors: Vec<Complex64> = (0..dim)
        .map(|k| Complex64::from_polar(1.0, system.chain.splitting(k) * phase0))
        .collect();
    let mut state = vec![ZERO; dim * dim];
    for n in 0..dim {
        for m in 0..dim {
            state[n * dim + m] = factors[n] * rho0.rho[(n, m)] * factors[m].conj();
        }
    }
    let rates: Vec<f64> = (0..dim * dim)
        .map(|i| gamma * dephasing_distance(i / dim, i % dim, rho0.dephase_alice))
        .collect();
    let rhs = |w: &[Complex64], rho: &[Complex64], out: &mut [Complex64]| lindblad_rhs(dim, w, &rates, rho, out);

    let mut last = None;
    {
        let mut wrapped = |frame: &Frame<'_>| {
            observer.observe(frame);
            if frame.t >= system.t_final() {
                last = Some(frame.density(rho0.dephase_alice));
            }
        };
        integrate(system, options, &mut state, rhs, trace_drift, false, &mut wrapped)?;
    }
    Ok(last.expect("final frame observed"))
}

/// Dephasing master equation recorded into a [`Trajectory`].
pub fn propagate_lindblad(
    rho0: &SubspaceDensity,
    system: &DrivenSystem,
    gamma: f64,
    options: &Propagation,
) -> Result<Trajectory> {
    let mut recorder = Recorder::new(system.chain.include_alice);
    let final_state = propagate_lindblad_observed(rho0, system, gamma, options, &mut recorder)?;
    Ok(recorder.finish_mixed(final_state))
}
