//! Chain description, ratchet splitting profile, two-stage ac drive and the
//! single-excitation tight-binding Hamiltonian.
//!
//! Energies are in units of the reference coupling `J`, times in units of
//! `1/J`, and `hbar = 1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bessel::{j0, j0_zero, xi0};
use crate::error::{Error, Result};

/// Distance to a zero of J0 below which a stage is considered frozen.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// Static description of the vertical chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    /// Number of chain qubits `N`, indexed `1..=N`.
    pub n_sites: usize,
    /// Bond strengths `J_1..J_{N-1}`; bond `n` joins sites `n` and `n + 1`.
    pub couplings: Vec<f64>,
    pub base_splitting: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub node_index: usize,
    /// Basis index 0 is Alice's excited qubit (routing) when set, the chain
    /// vacuum (state transfer) otherwise.
    pub include_alice: bool,
}

impl ChainSpec {
    /// Routing-mode chain with unit couplings.
    pub fn uniform(
        n_sites: usize,
        base_splitting: f64,
        lambda1: f64,
        lambda2: f64,
        node_index: usize,
    ) -> Result<Self> {
        let spec = Self {
            n_sites,
            couplings: vec![1.0; n_sites.saturating_sub(1)],
            base_splitting,
            lambda1,
            lambda2,
            node_index,
            include_alice: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_couplings(mut self, couplings: Vec<f64>) -> Result<Self> {
        self.couplings = couplings;
        self.validate()?;
        Ok(self)
    }

    pub fn with_node(mut self, node_index: usize) -> Result<Self> {
        self.node_index = node_index;
        self.validate()?;
        Ok(self)
    }

    /// Switches basis index 0 between Alice's qubit and the chain vacuum.
    pub fn with_alice(mut self, include_alice: bool) -> Self {
        self.include_alice = include_alice;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_sites;
        if n < 2 {
            return Err(Error::InvalidChain(format!("n_sites must be >= 2, got {n}")));
        }
        if self.couplings.len() != n - 1 {
            return Err(Error::InvalidChain(format!(
                "expected {} couplings, got {}",
                n - 1,
                self.couplings.len()
            )));
        }
        if let Some(bad) = self.couplings.iter().find(|j| !(j.is_finite() && **j > 0.0)) {
            return Err(Error::InvalidChain(format!("couplings must be > 0, got {bad}")));
        }
        if !(1..=n).contains(&self.node_index) {
            return Err(Error::InvalidChain(format!(
                "node_index {} outside 1..={n}",
                self.node_index
            )));
        }
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(Error::InvalidChain(
                "lambda1 and lambda2 must be > 0".to_string(),
            ));
        }
        if self.lambda1 == self.lambda2 {
            return Err(Error::InvalidChain(
                "degenerate ratchet: lambda1 == lambda2".to_string(),
            ));
        }
        if !self.base_splitting.is_finite() {
            return Err(Error::InvalidChain("base_splitting must be finite".to_string()));
        }
        Ok(())
    }

    /// Mean bond strength, used as `J` when scheduling stage durations.
    pub fn reference_coupling(&self) -> f64 {
        self.couplings.iter().sum::<f64>() / self.couplings.len() as f64
    }

    /// Bob's end: the end the excitation moves towards when the drive starts
    /// in stage 1. Stage 1 freezes the `lambda1` bonds, which are the bonds
    /// `(n, n + 1)` with odd `n`, so from an odd node the open bond points
    /// towards site 1.
    pub fn bob_end(&self) -> usize {
        if self.node_index % 2 == 1 {
            1
        } else {
            self.n_sites
        }
    }

    pub fn charlie_end(&self) -> usize {
        if self.bob_end() == 1 {
            self.n_sites
        } else {
            1
        }
    }

    pub fn distance_to(&self, site: usize) -> usize {
        self.node_index.abs_diff(site)
    }

    /// The nominal, error-free chain.
    pub fn realize(&self) -> Chain {
        Chain {
            couplings: self.couplings.clone(),
            splittings: ratchet_profile(self),
            include_alice: self.include_alice,
        }
    }
}

/// Node index for a chain of length `n` such that Bob's end is site 1 and
/// lies `ceil(n / 2)` hops away, matching the routing time `(T1 + T2) N / 4`.
pub fn central_node(n_sites: usize) -> usize {
    let node = n_sites.div_ceil(2) + 1;
    if node % 2 == 1 {
        node.min(n_sites)
    } else {
        // Keep the node odd so that stage 1 moves towards site 1.
        (node - 1).max(1)
    }
}

/// Realized chain: the couplings and splitting amplitudes the propagators
/// actually use. Nominal chains come from [`ChainSpec::realize`]; perturbed
/// ones from the fabrication-error sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub couplings: Vec<f64>,
    pub splittings: Vec<f64>,
    pub include_alice: bool,
}

impl Chain {
    pub fn n_sites(&self) -> usize {
        self.splittings.len()
    }

    /// Dimension of the single-excitation basis, `N + 1`.
    pub fn dim(&self) -> usize {
        self.splittings.len() + 1
    }

    /// Splitting amplitude for basis index `k`; index 0 carries none.
    pub fn splitting(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.splittings[k - 1]
        }
    }
}

/// Splitting amplitudes `b_1..b_N` repeating `b, b+L1, b+L1+L2, b+L2`.
pub fn ratchet_profile(spec: &ChainSpec) -> Vec<f64> {
    let b = spec.base_splitting;
    let pattern = [
        b,
        b + spec.lambda1,
        b + spec.lambda1 + spec.lambda2,
        b + spec.lambda2,
    ];
    (0..spec.n_sites).map(|i| pattern[i % 4]).collect()
}

/// `J_n J0(A (b_n - b_m) / omega)`.
pub fn effective_coupling(coupling: f64, b_n: f64, b_m: f64, a_scale: f64, omega: f64) -> f64 {
    coupling * j0(a_scale * (b_n - b_m) / omega)
}

fn check_not_frozen(argument: f64) -> Result<()> {
    let nearest = (argument.abs() / PI + 0.25).round().max(1.0) as usize;
    for k in nearest.saturating_sub(1).max(1)..=nearest + 1 {
        let distance = (argument.abs() - j0_zero(k)).abs();
        if distance < DEGENERACY_TOLERANCE {
            return Err(Error::DegenerateProtocol { argument, distance });
        }
    }
    Ok(())
}

/// Stage durations `(T1, T2)`, each a half tunnel cycle of the bond that
/// stays open during that stage.
///
/// Stage 1 drives with amplitude `xi0 omega / lambda1`: the `lambda1` bonds
/// are frozen and the `lambda2` bonds tunnel with `J J0(xi0 lambda2/lambda1)`.
/// Stage 2 is the mirror image.
pub fn stage_durations(coupling: f64, lambda1: f64, lambda2: f64) -> Result<(f64, f64)> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) || lambda1 == lambda2 {
        return Err(Error::InvalidProtocol(format!(
            "need distinct positive lambdas, got {lambda1} and {lambda2}"
        )));
    }
    if !(coupling > 0.0) {
        return Err(Error::InvalidProtocol(format!("coupling must be > 0, got {coupling}")));
    }
    let x = xi0();
    let open1 = x * lambda2 / lambda1;
    let open2 = x * lambda1 / lambda2;
    check_not_frozen(open1)?;
    check_not_frozen(open2)?;
    Ok((
        PI / (coupling * j0(open1)).abs(),
        PI / (coupling * j0(open2)).abs(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    First,
    Second,
}

/// Two-stage ac drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveProtocol {
    pub omega: f64,
    #[serde(default = "xi0")]
    pub xi0: f64,
    /// Nominal `(T1, T2)`.
    pub stage_durations: (f64, f64),
    /// Position in the drive cycle at `t = 0`.
    #[serde(default)]
    pub start_offset: f64,
    /// Protocol periods to simulate; `None` lets the experiment decide.
    #[serde(default)]
    pub n_cycles: Option<u32>,
    /// Snap each stage to a whole number of carrier periods.
    #[serde(default)]
    pub commensurate: bool,
}

impl DriveProtocol {
    /// Drive for `spec` with stage durations from [`stage_durations`].
    pub fn for_chain(spec: &ChainSpec, omega: f64) -> Result<Self> {
        let durations = stage_durations(spec.reference_coupling(), spec.lambda1, spec.lambda2)?;
        Self::with_durations(omega, durations)
    }

    pub fn with_durations(omega: f64, stage_durations: (f64, f64)) -> Result<Self> {
        let protocol = Self {
            omega,
            xi0: xi0(),
            stage_durations,
            start_offset: 0.0,
            n_cycles: None,
            commensurate: false,
        };
        protocol.validate()?;
        Ok(protocol)
    }

    pub fn with_start_offset(mut self, start_offset: f64) -> Self {
        self.start_offset = start_offset;
        self
    }

    pub fn with_cycles(mut self, n_cycles: u32) -> Self {
        self.n_cycles = Some(n_cycles);
        self
    }

    pub fn with_commensuration(mut self, commensurate: bool) -> Self {
        self.commensurate = commensurate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (t1, t2) = self.stage_durations;
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidProtocol(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(t1.is_finite() && t1 > 0.0 && t2.is_finite() && t2 > 0.0) {
            return Err(Error::InvalidProtocol(format!(
                "stage durations must be finite and > 0, got ({t1}, {t2})"
            )));
        }
        if !(self.start_offset >= 0.0 && self.start_offset < t1 + t2) {
            return Err(Error::InvalidProtocol(format!(
                "start_offset {} outside [0, T1 + T2)",
                self.start_offset
            )));
        }
        if (self.xi0 - xi0()).abs() > 1e-10 {
            return Err(Error::InvalidProtocol(format!(
                "xi0 = {} is not the first zero of J0",
                self.xi0
            )));
        }
        Ok(())
    }

    pub fn carrier_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Durations actually applied, after optional commensuration.
    pub fn durations(&self) -> (f64, f64) {
        let (t1, t2) = self.stage_durations;
        if self.commensurate {
            let p = self.carrier_period();
            let snap = |t: f64| (t / p).round().max(1.0) * p;
            (snap(t1), snap(t2))
        } else {
            (t1, t2)
        }
    }

    pub fn period(&self) -> f64 {
        let (t1, t2) = self.durations();
        t1 + t2
    }

    pub fn stage_at(&self, t: f64) -> Stage {
        let (t1, _) = self.durations();
        if (t + self.start_offset).rem_euclid(self.period()) < t1 {
            Stage::First
        } else {
            Stage::Second
        }
    }

    /// Prefactor `xi0 omega / lambda_s` of the drive during `stage`.
    pub fn amplitude_scale(&self, spec: &ChainSpec, stage: Stage) -> f64 {
        let lambda = match stage {
            Stage::First => spec.lambda1,
            Stage::Second => spec.lambda2,
        };
        self.xi0 * self.omega / lambda
    }

    /// Nominal stage sequence on `[0, t_final]`.
    pub fn schedule(&self, spec: &ChainSpec, t_final: f64) -> Schedule {
        let (t1, _) = self.durations();
        let period = self.period();
        let mut pieces = Vec::new();
        let mut start = 0.0;
        let mut phase = self.start_offset.rem_euclid(period);
        while start < t_final {
            let (stage, remaining) = if phase < t1 {
                (Stage::First, t1 - phase)
            } else {
                (Stage::Second, period - phase)
            };
            let end = (start + remaining).min(t_final);
            // Guard against slivers created by rounding at a boundary.
            if end - start > 1e-12 * period {
                pieces.push((start, end, stage));
            }
            start += remaining;
            phase = if stage == Stage::First { t1 } else { 0.0 };
        }
        Schedule::new(
            self.omega,
            (
                self.amplitude_scale(spec, Stage::First),
                self.amplitude_scale(spec, Stage::Second),
            ),
            &pieces,
        )
    }
}

/// One constant-amplitude stretch of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub stage: Stage,
    /// `xi0 omega / lambda_s`.
    pub amplitude: f64,
    /// Integrated drive phase per unit splitting at `start`.
    pub phase_at_start: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Realized drive: the concrete stage sequence with switch times.
///
/// Within a segment the field on site `n` is `b_n a cos(omega t)`; its time
/// integral is `b_n Phi(t)` with the scalar drive phase `Phi` tracked here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    omega: f64,
    amplitudes: (f64, f64),
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(omega: f64, amplitudes: (f64, f64), pieces: &[(f64, f64, Stage)]) -> Self {
        let mut segments = Vec::with_capacity(pieces.len());
        let mut phase = 0.0;
        for &(start, end, stage) in pieces {
            let amplitude = match stage {
                Stage::First => amplitudes.0,
                Stage::Second => amplitudes.1,
            };
            segments.push(Segment {
                start,
                end,
                stage,
                amplitude,
                phase_at_start: phase,
            });
            phase += amplitude * ((omega * end).sin() - (omega * start).sin()) / omega;
        }
        Self {
            omega,
            amplitudes,
            segments,
        }
    }

    /// Same stage sequence with the switch times moved to `switches`
    /// (one entry per interior boundary).
    pub fn with_switch_times(&self, switches: &[f64]) -> Result<Self> {
        if switches.len() + 1 != self.segments.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} switch times, got {}",
                self.segments.len().saturating_sub(1),
                switches.len()
            )));
        }
        let t_end = self.t_final();
        let mut pieces = Vec::with_capacity(self.segments.len());
        let mut start = self.segments[0].start;
        for (segment, &switch) in self.segments.iter().zip(switches) {
            let end = switch.clamp(start, t_end);
            pieces.push((start, end, segment.stage));
            start = end;
        }
        pieces.push((start, t_end, self.segments[self.segments.len() - 1].stage));
        pieces.retain(|(s, e, _)| e > s);
        Ok(Self::new(self.omega, self.amplitudes, &pieces))
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t_final(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    /// Index of the segment containing `t`; boundaries belong to the later segment.
    pub fn segment_index(&self, t: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.start <= t);
        idx.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// `Phi(t)` evaluated on segment `index`.
    pub fn phase_in(&self, index: usize, t: f64) -> f64 {
        let s = &self.segments[index];
        s.phase_at_start + s.amplitude * ((self.omega * t).sin() - (self.omega * s.start).sin()) / self.omega
    }

    pub fn phase(&self, t: f64) -> f64 {
        self.phase_in(self.segment_index(t), t)
    }

    /// Field per unit splitting, `a cos(omega t)`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.segments[self.segment_index(t)].amplitude * (self.omega * t).cos()
    }

    /// Instantaneous fields `h_1..h_N` on `chain`.
    pub fn field(&self, chain: &Chain, t: f64) -> Vec<f64> {
        let e = self.envelope(t);
        chain.splittings.iter().map(|b| b * e).collect()
    }
}

/// Instantaneous fields `h_n(t) = xi0 omega b_n cos(omega t) / lambda_s`.
pub fn drive_field(spec: &ChainSpec, protocol: &DriveProtocol, t: f64) -> Vec<f64> {
    let a = protocol.amplitude_scale(spec, protocol.stage_at(t));
    let carrier = (protocol.omega * t).cos();
    ratchet_profile(spec).into_iter().map(|b| a * b * carrier).collect()
}

/// Lab-frame tight-binding matrix in the `(N + 1)`-dimensional basis.
pub fn hamiltonian(spec: &ChainSpec, protocol: &DriveProtocol, t: f64) -> DMatrix<f64> {
    let fields = drive_field(spec, protocol, t);
    matrix_from_parts(&spec.couplings, &fields)
}

pub(crate) fn matrix_from_parts(couplings: &[f64], diagonal: &[f64]) -> DMatrix<f64> {
    let dim = diagonal.len() + 1;
    let mut h = DMatrix::zeros(dim, dim);
    for (n, &value) in diagonal.iter().enumerate() {
        h[(n + 1, n + 1)] = value;
    }
    for (n, &j) in couplings.iter().enumerate() {
        h[(n + 1, n + 2)] = 0.5 * j;
        h[(n + 2, n + 1)] = 0.5 * j;
    }
    h
}

/// Fabrication uncertainties, each sampled uniformly on `[-eps, eps]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    #[serde(default)]
    pub eps_j: f64,
    #[serde(default)]
    pub eps_b: f64,
    #[serde(default)]
    pub eps_t: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ErrorModel {
    pub fn ideal() -> Self {
        Self {
            eps_j: 0.0,
            eps_b: 0.0,
            eps_t: 0.0,
            seed: 0,
        }
    }

    /// Widths used for the fidelity histograms: `eps_J = eps_b = 1e-7`,
    /// `eps_T = 1e-3`.
    pub fn fabrication_defaults(seed: u64) -> Self {
        Self {
            eps_j: 1e-7,
            eps_b: 1e-7,
            eps_t: 1e-3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("eps_j", self.eps_j), ("eps_b", self.eps_b), ("eps_t", self.eps_t)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {value}")));
            }
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.eps_j == 0.0 && self.eps_b == 0.0 && self.eps_t == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn thirteen_site() -> ChainSpec {
        ChainSpec::uniform(13, 1.0, 3.0, 1.5, 7).unwrap()
    }

    #[test]
    fn profile_small_chain() {
        let spec = ChainSpec::uniform(5, 1.0, 3.0, 1.5, 3).unwrap();
        assert_eq!(ratchet_profile(&spec), vec![1.0, 4.0, 5.5, 2.5, 1.0]);
    }

    #[test]
    fn profile_differences_alternate() {
        let spec = ChainSpec::uniform(9, 1.0, 100.0, 59.02, 5).unwrap();
        let b = ratchet_profile(&spec);
        let diffs: Vec<f64> = b.windows(2).map(|w| w[1] - w[0]).collect();
        let expected = [100.0, 59.02, -100.0, -59.02, 100.0, 59.02, -100.0, -59.02];
        for (d, e) in diffs.iter().zip(expected) {
            assert!((d - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_ratchet() {
        let err = ChainSpec::uniform(5, 0.0, 2.0, 2.0, 3).unwrap_err();
        assert!(err.to_string().contains("degenerate ratchet"));
    }

    #[test]
    fn rejects_bad_node_and_couplings() {
        assert!(ChainSpec::uniform(5, 1.0, 3.0, 1.5, 0).is_err());
        assert!(ChainSpec::uniform(5, 1.0, 3.0, 1.5, 6).is_err());
        let spec = ChainSpec::uniform(3, 1.0, 3.0, 1.5, 2).unwrap();
        assert!(spec.clone().with_couplings(vec![1.0, -1.0]).is_err());
        assert!(spec.with_couplings(vec![1.0]).is_err());
    }

    #[test]
    fn field_at_zero_time() {
        let spec = ChainSpec::uniform(2, 1.0, 3.0, 1.5, 1).unwrap();
        let protocol = DriveProtocol::with_durations(10.0, (5.0, 5.0)).unwrap();
        let h = drive_field(&spec, &protocol, 0.0);
        assert!((h[0] - 2.404_825_557_695_773 * 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn field_vanishes_at_carrier_zero() {
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        let t = PI / (2.0 * protocol.omega);
        assert!(drive_field(&spec, &protocol, t).iter().all(|h| h.abs() < 1e-12));
    }

    #[test]
    fn field_switches_scale_at_t1() {
        let spec = ChainSpec::uniform(4, 1.0, 3.0, 1.5, 1).unwrap();
        // T1 is a whole number of carrier periods so cos(omega t) = 1 at both probes.
        let omega = 2.0 * PI;
        let protocol = DriveProtocol::with_durations(omega, (3.0, 2.0)).unwrap();
        assert_eq!(protocol.stage_at(3.0 - 1e-9), Stage::First);
        assert_eq!(protocol.stage_at(3.0), Stage::Second);
        let before = drive_field(&spec, &protocol, 3.0 - 1e-9)[0];
        let after = drive_field(&spec, &protocol, 3.0)[0];
        assert!((before - xi0() * omega / 3.0).abs() < 1e-6);
        assert!((after - xi0() * omega / 1.5).abs() < 1e-6);
    }

    #[test]
    fn undriven_pair_hamiltonian() {
        let spec = ChainSpec::uniform(2, 1.0, 3.0, 1.5, 1).unwrap();
        let protocol = DriveProtocol::with_durations(10.0, (5.0, 5.0)).unwrap();
        let h = hamiltonian(&spec, &protocol, PI / 20.0);
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0]);
        assert!((h - expected).abs().max() < 1e-12);
    }

    #[test]
    fn hamiltonian_diagonal_follows_profile() {
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        let h = hamiltonian(&spec, &protocol, 0.0);
        let scale = xi0() * 10.0 / 3.0;
        for (n, b) in ratchet_profile(&spec).iter().enumerate() {
            assert!((h[(n + 1, n + 1)] - b * scale).abs() < 1e-12);
        }
        assert_eq!(h, h.transpose());
        assert!(h.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn effective_coupling_cases() {
        assert_eq!(effective_coupling(1.0, 2.0, 2.0, 5.0, 10.0), 1.0);
        let frozen = effective_coupling(1.0, 3.0, 0.0, xi0() * 10.0 / 3.0, 10.0);
        assert!(frozen.abs() < 1e-10);
        // Stage-2 active bond of the (3, 1.5) ratchet.
        let active = effective_coupling(1.0, 3.0, 0.0, xi0() * 10.0 / 1.5, 10.0);
        assert!((active - (-0.237_536_218_201_343_5)).abs() < 1e-12);
    }

    #[test]
    fn stage_durations_for_thirteen_site_chain() {
        let (t1, t2) = stage_durations(1.0, 3.0, 1.5).unwrap();
        // Stage 1 keeps the lambda2 bonds open: J0(xi0 / 2).
        assert!((t1 - PI / 0.669_929_738_984_539_4).abs() < 1e-9);
        assert!((t2 - PI / 0.237_536_218_201_343_5).abs() < 1e-9);
    }

    #[test]
    fn stage_durations_reject_frozen_ratio() {
        // xi0 * lambda1 / lambda2 equal to the second zero of J0 freezes stage 2.
        let ratio = j0_zero(2) / xi0();
        let err = stage_durations(1.0, ratio, 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateProtocol { .. }));
        assert!(stage_durations(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn commensuration_snaps_to_carrier() {
        let protocol = DriveProtocol::with_durations(10.0, (4.7, 13.2))
            .unwrap()
            .with_commensuration(true);
        let p = protocol.carrier_period();
        let (t1, t2) = protocol.durations();
        assert!(((t1 / p).round() * p - t1).abs() < 1e-12);
        assert!(((t2 / p).round() * p - t2).abs() < 1e-12);
    }

    #[test]
    fn schedule_respects_offset() {
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        let (t1, t2) = protocol.durations();
        let schedule = protocol.clone().with_start_offset(t1).schedule(&spec, 2.0 * (t1 + t2));
        let seg = schedule.segments();
        assert_eq!(seg[0].stage, Stage::Second);
        assert!((seg[0].end - t2).abs() < 1e-12);
        assert_eq!(seg.len(), 4);
        let half = protocol.with_start_offset(0.5 * t1).schedule(&spec, t1 + t2);
        assert!((half.segments()[0].end - 0.5 * t1).abs() < 1e-12);
    }

    #[test]
    fn schedule_phase_is_integral_of_envelope() {
        let spec = thirteen_site();
        let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
        let schedule = protocol.schedule(&spec, 40.0);
        // Midpoint rule per segment, so the envelope jumps fall on cell edges.
        let mut integral = 0.0;
        for seg in schedule.segments() {
            let n = 20_000;
            let h = (seg.end - seg.start) / n as f64;
            for i in 0..n {
                integral += schedule.envelope(seg.start + (i as f64 + 0.5) * h) * h;
            }
        }
        assert!((integral - schedule.phase(40.0)).abs() < 1e-6);
    }

    #[test]
    fn central_node_points_at_site_one() {
        for n in [20, 40, 60, 100] {
            let node = central_node(n);
            let spec = ChainSpec::uniform(n, 1.0, 100.0, 59.02, node).unwrap();
            assert_eq!(spec.bob_end(), 1);
            assert_eq!(spec.distance_to(1), n / 2);
        }
    }

    proptest! {
        #[test]
        fn profile_alternation_holds(n in 2usize..40, b in -5.0f64..5.0, l1 in 0.1f64..10.0, l2 in 0.1f64..10.0) {
            prop_assume!((l1 - l2).abs() > 1e-6);
            let spec = ChainSpec::uniform(n, b, l1, l2, 1).unwrap();
            let profile = ratchet_profile(&spec);
            for (i, w) in profile.windows(2).enumerate() {
                let expected = if i % 2 == 0 { l1 } else { l2 };
                prop_assert!(((w[1] - w[0]).abs() - expected).abs() < 1e-9);
            }
        }

        #[test]
        fn effective_coupling_is_even(d in -20.0f64..20.0, a in 0.1f64..50.0, omega in 1.0f64..100.0) {
            let plus = effective_coupling(1.0, d, 0.0, a, omega);
            let minus = effective_coupling(1.0, 0.0, d, a, omega);
            prop_assert_eq!(plus, minus);
        }

        #[test]
        fn durations_swap_with_lambdas(l1 in 0.2f64..5.0, l2 in 0.2f64..5.0) {
            prop_assume!((l1 - l2).abs() > 1e-3);
            if let (Ok((a1, a2)), Ok((b1, b2))) = (stage_durations(1.0, l1, l2), stage_durations(1.0, l2, l1)) {
                prop_assert!((a1 - b2).abs() <= 1e-12 * a1);
                prop_assert!((a2 - b1).abs() <= 1e-12 * a2);
            }
        }

        #[test]
        fn stage_pattern_is_periodic(t in 0.0f64..200.0, offset_frac in 0.0f64..1.0, k in 1u32..5) {
            let protocol = DriveProtocol::with_durations(30.0, (4.0, 7.0)).unwrap()
                .with_start_offset(offset_frac * 11.0 * 0.999);
            let shifted = t + k as f64 * protocol.period();
            // Skip probes that straddle a boundary by rounding.
            let phase = (t + protocol.start_offset).rem_euclid(11.0);
            prop_assume!((phase - 4.0).abs() > 1e-9 && phase > 1e-9 && (11.0 - phase) > 1e-9);
            prop_assert_eq!(protocol.stage_at(t), protocol.stage_at(shifted));
        }

        #[test]
        fn hamiltonian_symmetric(t in 0.0f64..50.0) {
            let spec = ChainSpec::uniform(13, 1.0, 3.0, 1.5, 7).unwrap();
            let protocol = DriveProtocol::for_chain(&spec, 10.0).unwrap();
            let h = hamiltonian(&spec, &protocol, t);
            prop_assert_eq!(&h, &h.transpose());
            prop_assert!(h.row(0).iter().all(|v| *v == 0.0));
        }
    }
}
