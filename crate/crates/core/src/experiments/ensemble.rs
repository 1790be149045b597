use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nominal_system, ArrivalOffset};
use crate::dynamics::{
    propagate_lindblad_observed, propagate_pure_observed, DrivenSystem, Propagation, SubspaceDensity, WaveFunction,
};
use crate::error::{Error, Result};
use crate::metrics::{self, PeakReadout};
use crate::model::{ChainSpec, DriveProtocol, ErrorModel};

pub const HISTOGRAM_BIN: f64 = 1e-3;

/// One sampled device and its drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub index: u64,
    pub system: DrivenSystem,
    /// Start of the readout window (final protocol period).
    pub window_start: f64,
}

fn jitter(rng: &mut ChaCha8Rng, eps: f64) -> f64 {
    if eps == 0.0 {
        0.0
    } else {
        eps * (2.0 * rng.random::<f64>() - 1.0)
    }
}

/// Draws realization `index` of the routing run for `spec` and `protocol`.
///
/// Couplings and splittings are perturbed uniformly within the widths of
/// `errors`; every stage switch is delayed by its own uniform jitter on top
/// of the jitter of all earlier switches. The generator is ChaCha8 seeded
/// with `errors.seed` on stream `index`, so a draw depends only on the pair.
pub fn sample_realization(
    spec: &ChainSpec,
    protocol: &DriveProtocol,
    errors: &ErrorModel,
    index: u64,
) -> Result<Realization> {
    errors.validate()?;
    let (mut system, period) = nominal_system(spec, protocol, ArrivalOffset::Zero)?;
    let mut rng = ChaCha8Rng::seed_from_u64(errors.seed);
    rng.set_stream(index);
    for j in system.chain.couplings.iter_mut() {
        *j += jitter(&mut rng, errors.eps_j);
    }
    for b in system.chain.splittings.iter_mut() {
        *b += jitter(&mut rng, errors.eps_b);
    }
    if errors.eps_t > 0.0 {
        let mut drift = 0.0;
        let switches: Vec<f64> = system
            .schedule
            .switch_times()
            .into_iter()
            .map(|t| {
                drift += jitter(&mut rng, errors.eps_t);
                t + drift
            })
            .collect();
        system.schedule = system.schedule.with_switch_times(&switches)?;
    }
    let window_start = system.t_final() - period;
    Ok(Realization {
        index,
        system,
        window_start,
    })
}

/// How the transfer phase is compensated before computing fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseReference {
    /// Rotate every realization back by the ensemble's circular-mean phase.
    #[default]
    EnsembleMean,
    /// Rotate each realization back by its own phase.
    PerRealization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOptions {
    pub realizations: usize,
    /// Dephasing rate; `> 0` runs the state transfer under the Lindblad equation.
    pub gamma: f64,
    /// `|beta|^2` of the transferred qubit state.
    pub beta_sq: f64,
    pub phase_reference: PhaseReference,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub propagation: Propagation,
}

impl EnsembleOptions {
    /// Steps of 1/256 of a carrier period: norm drift stays near 1e-9, far
    /// below the spreads an ensemble resolves.
    pub fn new(realizations: usize, omega: f64) -> Self {
        Self {
            realizations,
            gamma: 0.0,
            beta_sq: 0.5,
            phase_reference: PhaseReference::EnsembleMean,
            workers: None,
            propagation: Propagation::for_omega(omega).with_dt_max(2.0 * std::f64::consts::PI / omega / 256.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: u64,
    pub couplings: Vec<f64>,
    pub splittings: Vec<f64>,
    pub switch_times: Vec<f64>,
    pub concurrence: f64,
    pub fidelity: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins of `bin_width` covering `[0, 1]`; 1 falls in the last bin.
    pub fn of_unit_interval(values: impl IntoIterator<Item = f64>, bin_width: f64) -> Self {
        let bins = (1.0 / bin_width).round() as usize;
        let mut counts = vec![0u64; bins];
        for v in values {
            let i = ((v.clamp(0.0, 1.0) / bin_width).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { bin_width, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Center of the fullest bin (lowest on ties).
    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
        (i as f64 + 0.5) * self.bin_width
    }

    /// Rows `bin_left, count`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["bin_left", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            out.write_record([format!("{:.6}", i as f64 * self.bin_width), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub records: Vec<RealizationRecord>,
    pub histogram: Histogram,
    /// Circular mean of the transfer phases, in `(-pi, pi]`.
    pub theta_mean: f64,
    pub std_fidelity: f64,
    pub std_concurrence: f64,
    pub mean_concurrence: f64,
    pub mean_fidelity: f64,
    pub realizations: usize,
    pub base_seed: u64,
    pub phase_reference: PhaseReference,
}

/// Raw outcome of one realization before phase compensation.
struct Outcome {
    theta: f64,
    concurrence: f64,
    /// Bob's excited population and `|rho_{B,0}|`, transfer mode only.
    bob: Option<(f64, f64)>,
}

fn simulate(spec: &ChainSpec, realization: &Realization, options: &EnsembleOptions) -> Result<Outcome> {
    let system = &realization.system;
    let bob = spec.bob_end();
    let mut peak = PeakReadout::new(bob, realization.window_start);
    if options.gamma > 0.0 {
        let alpha = (1.0 - options.beta_sq).sqrt();
        let beta = options.beta_sq.sqrt();
        let psi0 = WaveFunction::superposition(
            system.dim(),
            spec.node_index,
            Complex64::new(alpha, 0.0),
            Complex64::new(beta, 0.0),
        )?;
        let mut transfer = system.clone();
        transfer.chain.include_alice = false;
        let rho0 = SubspaceDensity::from_pure(&psi0, false);
        propagate_lindblad_observed(&rho0, &transfer, options.gamma, &options.propagation, &mut peak)?;
        let read = peak.result().expect("non-empty window").require_signal()?;
        let ab = alpha * beta;
        Ok(Outcome {
            theta: read.coherence.arg(),
            concurrence: if ab > 0.0 { (read.coherence.norm() / ab).min(1.0) } else { 0.0 },
            bob: Some((read.population, read.coherence.norm())),
        })
    } else {
        let psi0 = WaveFunction::bell(system.dim(), spec.node_index)?;
        propagate_pure_observed(&psi0, system, &options.propagation, &mut peak)?;
        let read = peak.result().expect("non-empty window").require_signal()?;
        // The source coherence c_node c_0^* starts real and positive.
        Ok(Outcome {
            theta: read.coherence.arg(),
            concurrence: read.concurrence().min(1.0),
            bob: None,
        })
    }
}

fn std_dev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `options.realizations` sampled devices in parallel and aggregates
/// transfer phase, concurrence and fidelity. Results depend only on the
/// inputs and the base seed, not on the number of workers.
pub fn run_ensemble(
    spec: &ChainSpec,
    protocol: &DriveProtocol,
    errors: &ErrorModel,
    options: &EnsembleOptions,
) -> Result<EnsembleResult> {
    if options.realizations < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ensemble needs at least 2 realizations, got {}",
            options.realizations
        )));
    }
    if !(0.0..=1.0).contains(&options.beta_sq) {
        return Err(Error::InvalidArgument(format!("beta_sq = {} outside [0, 1]", options.beta_sq)));
    }
    if !(options.gamma.is_finite() && options.gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", options.gamma)));
    }
    errors.validate()?;
    spec.validate()?;
    protocol.validate()?;

    let work = |index: usize| -> Result<(Realization, Outcome)> {
        let realization = sample_realization(spec, protocol, errors, index as u64)?;
        let outcome = simulate(spec, &realization, options)?;
        Ok((realization, outcome))
    };
    let run = || (0..options.realizations).into_par_iter().map(work).collect::<Result<Vec<_>>>();
    let results = match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run)?,
        None => run()?,
    };

    let phasor: Complex64 = results.iter().map(|(_, o)| Complex64::from_polar(1.0, o.theta)).sum();
    let theta_mean = metrics::wrap_phase(phasor.arg());
    let alpha = (1.0 - options.beta_sq).sqrt();
    let beta = options.beta_sq.sqrt();
    let records: Vec<RealizationRecord> = results
        .iter()
        .map(|(realization, outcome)| {
            let delta = match options.phase_reference {
                PhaseReference::EnsembleMean => metrics::wrap_phase(outcome.theta - theta_mean),
                PhaseReference::PerRealization => 0.0,
            };
            let fidelity = match outcome.bob {
                Some((rho11, rho10)) => metrics::fidelity_deco_exact(
                    rho11,
                    Complex64::new(rho10, 0.0),
                    Complex64::new(alpha, 0.0),
                    Complex64::new(beta, 0.0),
                    delta,
                ),
                None => metrics::fidelity_fab(outcome.concurrence, options.beta_sq, delta),
            };
            RealizationRecord {
                index: realization.index,
                couplings: realization.system.chain.couplings.clone(),
                splittings: realization.system.chain.splittings.clone(),
                switch_times: realization.system.schedule.switch_times(),
                concurrence: outcome.concurrence,
                fidelity,
                theta: outcome.theta,
            }
        })
        .collect();

    let fidelities: Vec<f64> = records.iter().map(|r| r.fidelity).collect();
    let concurrences: Vec<f64> = records.iter().map(|r| r.concurrence).collect();
    let (mean_fidelity, std_fidelity) = std_dev(&fidelities);
    let (mean_concurrence, std_concurrence) = std_dev(&concurrences);
    Ok(EnsembleResult {
        histogram: Histogram::of_unit_interval(fidelities.iter().copied(), HISTOGRAM_BIN),
        records,
        theta_mean,
        std_fidelity,
        std_concurrence,
        mean_concurrence,
        mean_fidelity,
        realizations: options.realizations,
        base_seed: errors.seed,
        phase_reference: options.phase_reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn short_chain() -> (ChainSpec, DriveProtocol) {
        let spec = ChainSpec::uniform(8, 1.0, 100.0, 59.02, 5).unwrap();
        let protocol = DriveProtocol::for_chain(&spec, 30.0).unwrap();
        (spec, protocol)
    }

    #[test]
    fn ideal_errors_are_identity() {
        let (spec, protocol) = short_chain();
        let r = sample_realization(&spec, &protocol, &ErrorModel::ideal(), 17).unwrap();
        let (nominal, _) = nominal_system(&spec, &protocol, ArrivalOffset::Zero).unwrap();
        assert_eq!(r.system, nominal);
    }

    #[test]
    fn draws_are_deterministic_and_bounded() {
        let (spec, protocol) = short_chain();
        let errors = ErrorModel::fabrication_defaults(99);
        let a = sample_realization(&spec, &protocol, &errors, 3).unwrap();
        let b = sample_realization(&spec, &protocol, &errors, 3).unwrap();
        let c = sample_realization(&spec, &protocol, &errors, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let nominal = spec.realize();
        for (j, j0) in a.system.chain.couplings.iter().zip(&nominal.couplings) {
            assert!((j - j0).abs() <= 1e-7);
        }
        for (s, s0) in a.system.chain.splittings.iter().zip(&nominal.splittings) {
            assert!((s - s0).abs() <= 1e-7);
        }
        let (sys, _) = nominal_system(&spec, &protocol, ArrivalOffset::Zero).unwrap();
        let switches = sys.schedule.switch_times();
        for (k, (t, t0)) in a.system.schedule.switch_times().iter().zip(&switches).enumerate() {
            assert!((t - t0).abs() <= 1e-3 * (k + 1) as f64 + 1e-12);
        }
    }

    #[test]
    fn rejects_single_realization() {
        let (spec, protocol) = short_chain();
        let options = EnsembleOptions::new(1, 30.0);
        assert!(run_ensemble(&spec, &protocol, &ErrorModel::ideal(), &options).is_err());
    }

    #[test]
    fn ideal_ensemble_has_no_spread() {
        let (spec, protocol) = short_chain();
        let options = EnsembleOptions::new(6, 30.0);
        let result = run_ensemble(&spec, &protocol, &ErrorModel::ideal(), &options).unwrap();
        assert_eq!(result.std_concurrence, 0.0);
        assert_eq!(result.std_fidelity, 0.0);
        assert_eq!(result.histogram.total(), 6);
        assert!((result.theta_mean - result.records[0].theta).abs() < 1e-12);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (spec, protocol) = short_chain();
        let errors = ErrorModel::fabrication_defaults(5);
        let mut options = EnsembleOptions::new(8, 30.0);
        options.workers = Some(1);
        let serial = run_ensemble(&spec, &protocol, &errors, &options).unwrap();
        options.workers = Some(4);
        let parallel = run_ensemble(&spec, &protocol, &errors, &options).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn dephased_ensemble_uses_transfer_mode() {
        let (spec, protocol) = short_chain();
        let mut options = EnsembleOptions::new(2, 30.0);
        options.gamma = 1e-3;
        let result = run_ensemble(&spec, &protocol, &ErrorModel::ideal(), &options).unwrap();
        assert!(result.mean_fidelity < 1.0 && result.mean_fidelity > 0.9);
    }

    proptest! {
        #[test]
        fn histogram_counts_are_permutation_invariant(mut values in prop::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
            let a = Histogram::of_unit_interval(values.iter().copied(), HISTOGRAM_BIN);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..values.len()).rev() {
                let j = rng.random_range(0..=i);
                values.swap(i, j);
            }
            let b = Histogram::of_unit_interval(values.iter().copied(), HISTOGRAM_BIN);
            prop_assert_eq!(a.total(), values.len() as u64);
            prop_assert_eq!(a, b);
        }
    }
}
