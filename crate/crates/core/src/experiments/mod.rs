//! Numerical studies built on the propagators: routing and splitting runs,
//! frequency/length and decoherence sweeps, the stage-ratio optimizer and
//! fabrication-error ensembles.

mod ensemble;
mod optimize;

pub use ensemble::{
    run_ensemble, sample_realization, EnsembleOptions, EnsembleResult, Histogram, PhaseReference, Realization,
    RealizationRecord,
};
pub use optimize::{optimize_ratio, period_factor, OptimalRatio};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    propagate_effective, propagate_effective_observed, propagate_lindblad, propagate_lindblad_observed, propagate_pure,
    propagate_pure_observed, DrivenSystem, Propagation, SubspaceDensity, Trajectory, WaveFunction,
};
use crate::error::{Error, Result};
use crate::metrics::{self, PeakReadout, Readout};
use crate::model::{central_node, ChainSpec, DriveProtocol};

/// Where in the drive cycle the protocol stands when the run starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ArrivalOffset {
    /// Start at the beginning of stage 1.
    Zero,
    /// Start at the beginning of stage 2; reverses the direction.
    FirstStage,
    /// Start halfway through stage 1; splits the excitation.
    HalfFirstStage,
    /// Arbitrary position in `[0, T1 + T2)`.
    Time(f64),
}

impl ArrivalOffset {
    pub fn start_offset(&self, protocol: &DriveProtocol) -> f64 {
        let (t1, _) = protocol.durations();
        match *self {
            ArrivalOffset::Zero => 0.0,
            ArrivalOffset::FirstStage => t1,
            ArrivalOffset::HalfFirstStage => 0.5 * t1,
            ArrivalOffset::Time(t) => t,
        }
    }
}

/// `(T1 + T2) N / 4`: one protocol period moves the signal two sites.
pub fn tau_ab(t1: f64, t2: f64, n_sites: usize) -> f64 {
    (t1 + t2) * n_sites as f64 / 4.0
}

/// Protocol periods needed to carry the signal across `distance` sites,
/// plus one period of margin that serves as the readout window.
pub fn cycles_for_distance(distance: usize) -> u32 {
    distance.div_ceil(2) as u32 + 1
}

/// Run length in periods: the explicit `n_cycles` of the protocol or the
/// stopping rule for the farther of the targeted ends.
fn run_cycles(spec: &ChainSpec, protocol: &DriveProtocol, offset: ArrivalOffset) -> u32 {
    if let Some(n) = protocol.n_cycles {
        return n;
    }
    let to_bob = spec.distance_to(spec.bob_end());
    let to_charlie = spec.distance_to(spec.charlie_end());
    let distance = match offset {
        ArrivalOffset::Zero => to_bob,
        ArrivalOffset::FirstStage => to_charlie,
        _ => to_bob.max(to_charlie),
    };
    cycles_for_distance(distance)
}

/// Drive and chain for a run, with the protocol shifted to `offset`.
fn nominal_system(spec: &ChainSpec, protocol: &DriveProtocol, offset: ArrivalOffset) -> Result<(DrivenSystem, f64)> {
    spec.validate()?;
    let start = offset.start_offset(protocol);
    let shifted = protocol.clone().with_start_offset(start);
    shifted.validate()?;
    let t_final = run_cycles(spec, protocol, offset) as f64 * shifted.period();
    Ok((DrivenSystem::nominal(spec, &shifted, t_final), shifted.period()))
}

/// Outcome of a routing run.
#[derive(Debug, Clone)]
pub struct RoutingResult {
    pub trajectory: Trajectory,
    pub bob: Readout,
    pub charlie: Readout,
    /// Start of the final protocol period, where the ends are read.
    pub window_start: f64,
    pub t_final: f64,
}

impl RoutingResult {
    pub fn c_bob(&self) -> f64 {
        self.bob.concurrence()
    }

    pub fn c_charlie(&self) -> f64 {
        self.charlie.concurrence()
    }
}

fn end_readouts(trajectory: &Trajectory, spec: &ChainSpec, window_start: f64) -> Result<(Readout, Readout)> {
    let read = |site| -> Result<Readout> {
        match metrics::readout(trajectory, site, window_start) {
            Err(Error::NoSignal { .. }) => Ok(Readout {
                site,
                time: trajectory.t_final(),
                population: trajectory.population(trajectory.len() - 1, site),
                coherence: trajectory.coherence(trajectory.len() - 1, site),
                amplitude: trajectory.amplitude(trajectory.len() - 1, site),
            }),
            other => other,
        }
    };
    Ok((read(spec.bob_end())?, read(spec.charlie_end())?))
}

/// Routes Alice's entanglement with the node qubit along the chain, starting
/// from `(|0> + |node>) / sqrt(2)`. An end that receives no signal is
/// reported with its final-sample values.
pub fn run_routing(
    spec: &ChainSpec,
    protocol: &DriveProtocol,
    offset: ArrivalOffset,
    options: &Propagation,
) -> Result<RoutingResult> {
    let (system, period) = nominal_system(spec, protocol, offset)?;
    let psi0 = WaveFunction::bell(system.dim(), spec.node_index)?;
    let trajectory = propagate_pure(&psi0, &system, options)?;
    let t_final = system.t_final();
    let window_start = t_final - period;
    let (bob, charlie) = end_readouts(&trajectory, spec, window_start)?;
    Ok(RoutingResult {
        trajectory,
        bob,
        charlie,
        window_start,
        t_final,
    })
}

/// Same run in the piecewise-static effective (RWA) description.
pub fn run_routing_effective(
    spec: &ChainSpec,
    protocol: &DriveProtocol,
    offset: ArrivalOffset,
    options: &Propagation,
) -> Result<RoutingResult> {
    let (system, period) = nominal_system(spec, protocol, offset)?;
    let psi0 = WaveFunction::bell(system.dim(), spec.node_index)?;
    let trajectory = propagate_effective(&psi0, &system, options)?;
    let t_final = system.t_final();
    let window_start = t_final - period;
    let (bob, charlie) = end_readouts(&trajectory, spec, window_start)?;
    Ok(RoutingResult {
        trajectory,
        bob,
        charlie,
        window_start,
        t_final,
    })
}

/// Routing under dephasing at rate `gamma`, with Alice's qubit dephased as
/// well. Returns the recorded trajectory and the readouts at both ends.
pub fn run_routing_dephased(
    spec: &ChainSpec,
    protocol: &DriveProtocol,
    offset: ArrivalOffset,
    gamma: f64,
    options: &Propagation,
) -> Result<RoutingResult> {
    let (system, period) = nominal_system(spec, protocol, offset)?;
    let psi0 = WaveFunction::bell(system.dim(), spec.node_index)?;
    let rho0 = SubspaceDensity::from_pure(&psi0, spec.include_alice);
    let trajectory = propagate_lindblad(&rho0, &system, gamma, options)?;
    if let Some(rho) = &trajectory.final_density {
        metrics::concurrence_mixed(rho, spec.bob_end())?;
    }
    let t_final = system.t_final();
    let window_start = t_final - period;
    let (bob, charlie) = end_readouts(&trajectory, spec, window_start)?;
    Ok(RoutingResult {
        trajectory,
        bob,
        charlie,
        window_start,
        t_final,
    })
}

/// Final `C_{A,B}` at Bob's end without recording a trajectory.
pub(crate) fn bob_readout(
    system: &DrivenSystem,
    spec: &ChainSpec,
    period: f64,
    gamma: f64,
    options: &Propagation,
    effective: bool,
) -> Result<Readout> {
    let psi0 = WaveFunction::bell(system.dim(), spec.node_index)?;
    let mut peak = PeakReadout::new(spec.bob_end(), system.t_final() - period);
    if effective {
        propagate_effective_observed(&psi0, system, options, &mut peak)?;
    } else if gamma > 0.0 {
        let rho0 = SubspaceDensity::from_pure(&psi0, spec.include_alice);
        propagate_lindblad_observed(&rho0, system, gamma, options, &mut peak)?;
    } else {
        propagate_pure_observed(&psi0, system, options, &mut peak)?;
    }
    peak.result()
        .ok_or_else(|| Error::InvalidArgument("empty readout window".to_string()))?
        .require_signal()
}

/// Outcome of transferring `alpha|0> + beta|1>` from the node to Bob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub readout: Readout,
    /// Transfer phase of `rho_{B,0}` relative to `beta alpha^*`.
    pub theta: f64,
    /// `<psi| rho_B |psi>` with `theta` rotated back.
    pub fidelity: f64,
    pub report: metrics::TransferReport,
    pub t_final: f64,
}

/// Loads `alpha|0> + beta|1>` into the node qubit of a chain whose index 0
/// is the vacuum, runs the protocol towards Bob and reads Bob's qubit.
/// `gamma > 0` propagates the Lindblad equation without a stationary qubit.
pub fn run_transfer(
    spec: &ChainSpec,
    protocol: &DriveProtocol,
    alpha: Complex64,
    beta: Complex64,
    gamma: f64,
    options: &Propagation,
) -> Result<TransferResult> {
    let spec = spec.clone().with_alice(false);
    let (system, period) = nominal_system(&spec, protocol, ArrivalOffset::Zero)?;
    let psi0 = WaveFunction::superposition(system.dim(), spec.node_index, alpha, beta)?;
    let bob = spec.bob_end();
    let mut peak = PeakReadout::new(bob, system.t_final() - period);
    if gamma > 0.0 {
        let rho0 = SubspaceDensity::from_pure(&psi0, false);
        propagate_lindblad_observed(&rho0, &system, gamma, options, &mut peak)?;
    } else {
        propagate_pure_observed(&psi0, &system, options, &mut peak)?;
    }
    let readout = peak
        .result()
        .ok_or_else(|| Error::InvalidArgument("empty readout window".to_string()))?
        .require_signal()?;
    let source = beta * alpha.conj();
    let theta = if source.norm() > 0.0 {
        metrics::wrap_phase(readout.coherence.arg() - source.arg())
    } else {
        0.0
    };
    let rotated = readout.coherence * Complex64::from_polar(1.0, -theta);
    let bob_state = nalgebra::Matrix2::new(
        Complex64::new(1.0 - readout.population, 0.0),
        rotated.conj(),
        rotated,
        Complex64::new(readout.population, 0.0),
    );
    let psi = nalgebra::Vector2::new(alpha, beta);
    let fidelity = (psi.adjoint() * bob_state * psi)[(0, 0)].re;
    // Effective transfer amplitude: |c_B| from the coherence when the
    // source carries one, otherwise from the population.
    let c_b = if source.norm() > 0.0 {
        Complex64::from_polar((readout.coherence.norm() / source.norm()).min(1.0), theta)
    } else {
        Complex64::new((readout.population / beta.norm_sqr()).sqrt().min(1.0), 0.0)
    };
    Ok(TransferResult {
        readout,
        theta,
        fidelity,
        report: metrics::TransferReport::new(alpha, beta, c_b)?,
        t_final: system.t_final(),
    })
}

/// One curve of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    /// Parameter held fixed along the curve, e.g. `omega` or `n_sites`.
    pub parameter: String,
    pub value: f64,
    pub c_sim: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub c_estimate: Vec<f64>,
}

/// Sweep over a strictly increasing axis, one series per fixed parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub series: Vec<SweepSeries>,
}

impl SweepResult {
    /// Rows `axis, parameter, value, C_sim, F, C_estimate`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([self.axis_name.as_str(), "parameter", "value", "C_sim", "F", "C_estimate"])?;
        for series in &self.series {
            for (i, x) in self.axis.iter().enumerate() {
                out.write_record([
                    format!("{x}"),
                    series.parameter.clone(),
                    format!("{}", series.value),
                    format!("{:.12e}", series.c_sim[i]),
                    format!("{:.12e}", series.fidelity[i]),
                    format!("{:.12e}", series.c_estimate[i]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} axis is empty")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!("{name} axis must be strictly increasing")));
    }
    Ok(())
}

/// Parameters shared by every chain in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatchetParameters {
    pub base_splitting: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RatchetParameters {
    /// Uniform chain of length `n` with the node at [`central_node`].
    pub fn chain(&self, n: usize) -> Result<ChainSpec> {
        ChainSpec::uniform(n, self.base_splitting, self.lambda1, self.lambda2, central_node(n))
    }
}

/// Final `C_{A,B}` for every `(omega, N)`; series per `omega`, axis `N`. The
/// estimate column holds the effective-Hamiltonian value of the same run.
pub fn sweep_frequency_length(
    ratchet: RatchetParameters,
    omegas: &[f64],
    lengths: &[usize],
    dt_max: Option<f64>,
) -> Result<SweepResult> {
    let axis: Vec<f64> = lengths.iter().map(|&n| n as f64).collect();
    check_axis("n_sites", &axis)?;
    check_axis("omega", omegas)?;
    let mut series = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let mut c_sim = Vec::with_capacity(lengths.len());
        let mut c_estimate = Vec::with_capacity(lengths.len());
        for &n in lengths {
            let spec = ratchet.chain(n)?;
            let protocol = DriveProtocol::for_chain(&spec, omega)?;
            let options = propagation(omega, dt_max);
            let (system, period) = nominal_system(&spec, &protocol, ArrivalOffset::Zero)?;
            c_sim.push(bob_readout(&system, &spec, period, 0.0, &options, false)?.concurrence());
            c_estimate.push(bob_readout(&system, &spec, period, 0.0, &options, true)?.concurrence());
        }
        let fidelity = c_sim.iter().map(|&c| metrics::fidelity_from_concurrence(c, 0.5)).collect();
        series.push(SweepSeries {
            parameter: "omega[J]".to_string(),
            value: omega,
            c_sim,
            fidelity,
            c_estimate,
        });
    }
    Ok(SweepResult {
        axis_name: "n_sites".to_string(),
        axis,
        series,
    })
}

/// Final `C_{A,B}` under dephasing for every `(gamma, N)`; series per `N`,
/// axis `gamma`. Overlay: `C(0) exp(-2 gamma tau_AB)`.
pub fn decoherence_sweep(
    ratchet: RatchetParameters,
    omega: f64,
    gammas: &[f64],
    lengths: &[usize],
    dt_max: Option<f64>,
) -> Result<SweepResult> {
    check_axis("gamma", gammas)?;
    if gammas[0] < 0.0 {
        return Err(Error::InvalidArgument("gamma must be >= 0".to_string()));
    }
    let mut series = Vec::with_capacity(lengths.len());
    for &n in lengths {
        let spec = ratchet.chain(n)?;
        let protocol = DriveProtocol::for_chain(&spec, omega)?;
        let options = propagation(omega, dt_max);
        let (system, period) = nominal_system(&spec, &protocol, ArrivalOffset::Zero)?;
        let (t1, t2) = protocol.durations();
        let tau = tau_ab(t1, t2, n);
        let c0 = bob_readout(&system, &spec, period, 0.0, &options, false)?.concurrence();
        let mut c_sim = Vec::with_capacity(gammas.len());
        let mut c_estimate = Vec::with_capacity(gammas.len());
        for &gamma in gammas {
            let c = if gamma == 0.0 {
                c0
            } else {
                bob_readout(&system, &spec, period, gamma, &options, false)?.concurrence()
            };
            c_sim.push(c);
            c_estimate.push(c0 * (-2.0 * gamma * tau).exp());
        }
        let fidelity = c_sim.iter().map(|&c| metrics::fidelity_from_concurrence(c, 0.5)).collect();
        series.push(SweepSeries {
            parameter: "n_sites".to_string(),
            value: n as f64,
            c_sim,
            fidelity,
            c_estimate,
        });
    }
    Ok(SweepResult {
        axis_name: "gamma[J]".to_string(),
        axis: gammas.to_vec(),
        series,
    })
}

fn propagation(omega: f64, dt_max: Option<f64>) -> Propagation {
    let options = Propagation::for_omega(omega);
    match dt_max {
        Some(dt) => options.with_dt_max(dt),
        None => options,
    }
}

/// Largest per-site population gap between two runs sampled on the same grid.
pub fn population_gap(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::InvalidArgument("trajectories sampled on different grids".to_string()));
    }
    let mut gap: f64 = 0.0;
    for s in 0..a.len() {
        for k in 0..a.dim() {
            gap = gap.max((a.population(s, k) - b.population(s, k)).abs());
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn thirteen_site() -> ChainSpec {
        ChainSpec::uniform(13, 1.0, 3.0, 1.5, 7).unwrap()
    }

    #[test]
    fn tau_ab_cases() {
        assert_eq!(tau_ab(2.0, 3.0, 4), 5.0);
        assert_eq!(tau_ab(2.0, 3.0, 40), 2.0 * tau_ab(2.0, 3.0, 20));
        let (t1, t2) = crate::model::stage_durations(1.0, 100.0, 59.02).unwrap();
        assert!((tau_ab(t1, t2, 60) - 206.0).abs() < 1.0);
    }

    #[test]
    fn stopping_rule() {
        assert_eq!(cycles_for_distance(6), 4);
        assert_eq!(cycles_for_distance(7), 5);
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        assert_eq!(run_cycles(&spec, &protocol, ArrivalOffset::Zero), 4);
        assert_eq!(run_cycles(&spec, &protocol.with_cycles(9), ArrivalOffset::Zero), 9);
    }

    #[test]
    fn offset_zero_and_first_stage_reach_opposite_ends() {
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        let options = Propagation::for_omega(10.0);
        let to_bob = run_routing(&spec, &protocol, ArrivalOffset::Zero, &options).unwrap();
        let to_charlie = run_routing(&spec, &protocol, ArrivalOffset::FirstStage, &options).unwrap();
        assert!(to_bob.c_bob() > to_bob.c_charlie());
        assert!(to_charlie.c_charlie() > to_charlie.c_bob());
    }

    #[test]
    fn undriven_half_cycle_phase() {
        // Two sites, no drive: c_2(t) = -i sin(J t / 2), full transfer at t = pi/J.
        let spec = ChainSpec::uniform(2, 0.0, 1.0, 0.5, 1).unwrap().with_alice(false);
        let chain = spec.realize();
        let schedule = crate::model::Schedule::new(1.0, (0.0, 0.0), &[(0.0, PI, crate::model::Stage::First)]);
        let system = DrivenSystem::new(chain, schedule);
        let psi0 = WaveFunction::localized(3, 1).unwrap();
        let options = Propagation::for_omega(1.0).with_dt_max(1e-3);
        let trajectory = propagate_pure(&psi0, &system, &options).unwrap();
        let theta = metrics::extract_phase(&trajectory, 2, 1, 0.0).unwrap();
        assert_abs_diff_eq!(theta, -PI / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn transfer_of_ground_state_is_perfect() {
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        let options = Propagation::for_omega(10.0);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        // No excitation: nothing arrives.
        assert!(matches!(
            run_transfer(&spec, &protocol, one, zero, 0.0, &options),
            Err(Error::NoSignal { .. })
        ));
        let half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let result = run_transfer(&spec, &protocol, half, half, 0.0, &options).unwrap();
        assert_abs_diff_eq!(result.fidelity, result.report.fidelity, epsilon = 1e-9);
    }

    #[test]
    fn sweep_axes_must_increase() {
        let ratchet = RatchetParameters {
            base_splitting: 1.0,
            lambda1: 100.0,
            lambda2: 59.02,
        };
        assert!(sweep_frequency_length(ratchet, &[30.0], &[20, 20], None).is_err());
        assert!(decoherence_sweep(ratchet, 30.0, &[1e-3, 1e-4], &[20], None).is_err());
    }

    #[test]
    fn decoherence_overlay_exact_at_zero_gamma() {
        let ratchet = RatchetParameters {
            base_splitting: 1.0,
            lambda1: 100.0,
            lambda2: 59.02,
        };
        let sweep = decoherence_sweep(ratchet, 30.0, &[0.0, 1e-3], &[8], None).unwrap();
        let s = &sweep.series[0];
        assert_eq!(s.c_sim[0], s.c_estimate[0]);
        assert!(s.c_sim[1] < s.c_sim[0]);
    }
}
