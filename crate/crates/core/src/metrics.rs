//! Entanglement and state-transfer figures of merit.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Frame, Observer, SubspaceDensity, Trajectory, WaveFunction};
use crate::error::{Error, Result};

/// Eigenvalues of a reduced state below `-EIGEN_TOLERANCE` are a propagation defect.
pub const EIGEN_TOLERANCE: f64 = 1e-9;

/// Populations below this at readout mean nothing arrived.
pub const SIGNAL_THRESHOLD: f64 = 1e-3;

const fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `C_{A,n} = 2 |c_0 c_n|`.
pub fn concurrence_pure(psi: &WaveFunction, site: usize) -> f64 {
    2.0 * (psi.amplitudes[0] * psi.amplitudes[site]).norm()
}

/// Two-qubit state of Alice's qubit and chain qubit `n`, in the basis
/// `|0_A 0_n>, |0_A 1_n>, |1_A 0_n>, |1_A 1_n>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPair {
    pub rho: Matrix4<Complex64>,
}

impl ReducedPair {
    /// Partial trace over every chain site but `site`, with basis index 0
    /// being Alice's excited qubit.
    pub fn from_density(rho: &SubspaceDensity, site: usize) -> Self {
        let rest: f64 = (1..rho.dim()).filter(|&k| k != site).map(|k| rho.population(k)).sum();
        Self::from_parts(rest, rho.population(site), rho.population(0), rho.coherence(site))
    }

    pub fn from_wavefunction(psi: &WaveFunction, site: usize) -> Self {
        Self::from_density(&SubspaceDensity::from_pure(psi, true), site)
    }

    fn from_parts(rest: f64, site_pop: f64, alice_pop: f64, coherence: Complex64) -> Self {
        let mut rho = Matrix4::zeros();
        rho[(0, 0)] = c(rest);
        rho[(1, 1)] = c(site_pop);
        rho[(2, 2)] = c(alice_pop);
        rho[(1, 2)] = coherence;
        rho[(2, 1)] = coherence.conj();
        Self { rho }
    }

    /// The X-shape shortcut `2 |rho_{n0}|`.
    pub fn concurrence_fast(&self) -> f64 {
        2.0 * self.rho[(1, 2)].norm()
    }

    /// Wootters concurrence `max(l1 - l2 - l3 - l4, 0)` from the square roots
    /// of the eigenvalues of `sqrt(rho) rho~ sqrt(rho)`, with
    /// `rho~ = (sy x sy) rho^* (sy x sy)`.
    pub fn concurrence_wootters(&self) -> Result<f64> {
        let eig = SymmetricEigen::new(self.rho);
        let mut sqrt_diag = Matrix4::<Complex64>::zeros();
        for i in 0..4 {
            let value = eig.eigenvalues[i];
            if value < -EIGEN_TOLERANCE {
                return Err(Error::NegativeEigenvalue(value));
            }
            sqrt_diag[(i, i)] = c(value.max(0.0).sqrt());
        }
        let sqrt_rho = eig.eigenvectors * sqrt_diag * eig.eigenvectors.adjoint();
        #[rustfmt::skip]
        let yy = Matrix4::new(
            c(0.0), c(0.0), c(0.0), c(-1.0),
            c(0.0), c(0.0), c(1.0), c(0.0),
            c(0.0), c(1.0), c(0.0), c(0.0),
            c(-1.0), c(0.0), c(0.0), c(0.0),
        );
        let flipped = yy * self.rho.conjugate() * yy;
        let m = sqrt_rho * flipped * sqrt_rho;
        let m = (m + m.adjoint()) * c(0.5);
        let mut lambdas: Vec<f64> = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
    }
}

/// Concurrence between Alice's qubit and chain qubit `site`. Evaluates both
/// the Wootters formula and the X-shape shortcut and insists they agree.
pub fn concurrence_mixed(rho: &SubspaceDensity, site: usize) -> Result<f64> {
    let pair = ReducedPair::from_density(rho, site);
    let full = pair.concurrence_wootters()?;
    let fast = pair.concurrence_fast();
    if (full - fast).abs() > 1e-9 {
        return Err(Error::InvalidState(format!(
            "Wootters concurrence {full} disagrees with X-state value {fast}"
        )));
    }
    Ok(fast)
}

/// Bob's qubit in the basis `|0>, |1>` when index 0 is the chain vacuum.
pub fn bob_qubit(rho: &SubspaceDensity, site: usize) -> Matrix2<Complex64> {
    let p = rho.population(site);
    let coherence = rho.coherence(site);
    Matrix2::new(c(1.0 - p), coherence.conj(), coherence, c(p))
}

fn overlap(alpha: Complex64, beta: Complex64, rho_b: &Matrix2<Complex64>) -> f64 {
    let psi = nalgebra::Vector2::new(alpha, beta);
    (psi.adjoint() * rho_b * psi)[(0, 0)].re
}

/// Bob's state for input `alpha|0> + beta|1>` after an excitation-conserving
/// channel with transfer amplitude `c_b`: excited population
/// `|beta|^2 |c_b|^2`, coherence `beta alpha^* c_b`.
pub fn rho_b(alpha: Complex64, beta: Complex64, c_b: Complex64) -> Matrix2<Complex64> {
    let p = beta.norm_sqr() * c_b.norm_sqr();
    let coherence = beta * alpha.conj() * c_b;
    Matrix2::new(c(1.0 - p), coherence.conj(), coherence, c(p))
}

/// Variant with excited population `|beta|^2 |c_b|` (unsquared modulus).
/// Kept only to compare against the propagated dynamics.
pub fn rho_b_unsquared(alpha: Complex64, beta: Complex64, c_b: Complex64) -> Matrix2<Complex64> {
    let p = beta.norm_sqr() * c_b.norm();
    let coherence = beta * alpha.conj() * c_b;
    Matrix2::new(c(1.0 - p), coherence.conj(), coherence, c(p))
}

/// `<psi_A| rho_B |psi_A>` with the transfer phase of `c_b` rotated back.
pub fn fidelity_from_rho_b(alpha: Complex64, beta: Complex64, c_b: Complex64) -> f64 {
    overlap(alpha, beta, &rho_b(alpha, beta, c(c_b.norm())))
}

/// `F = 1 - (1 - C) |beta|^2 [1 - C (1 - 2 |beta|^2)]`.
pub fn fidelity_from_concurrence(concurrence: f64, beta_sq: f64) -> f64 {
    1.0 - (1.0 - concurrence) * beta_sq * (1.0 - concurrence * (1.0 - 2.0 * beta_sq))
}

/// Fidelity with a residual phase error `delta_theta`:
/// `F = 1 - |b|^2 (1 - 2 C cos d + C^2) + 2 |b|^4 C (C - cos d)`.
pub fn fidelity_fab(concurrence: f64, beta_sq: f64, delta_theta: f64) -> f64 {
    let cos = delta_theta.cos();
    1.0 - beta_sq * (1.0 - 2.0 * concurrence * cos + concurrence * concurrence)
        + 2.0 * beta_sq * beta_sq * concurrence * (concurrence - cos)
}

/// Dephasing estimate `F = 1 - 2 (|b|^2 - |b|^4) [1 - cos(d) exp(-gamma tau)]`.
pub fn fidelity_deco_approx(beta_sq: f64, delta_theta: f64, gamma: f64, tau_ab: f64) -> f64 {
    1.0 - 2.0 * (beta_sq - beta_sq * beta_sq) * (1.0 - delta_theta.cos() * (-gamma * tau_ab).exp())
}

/// `F = 1 - rho11 + |b|^2 (2 rho11 - 1) + 2 |rho10| Re(alpha beta e^{i d})`
/// from Bob's reduced state. Exact overlap for real `alpha`, `beta` when
/// `delta_theta` is the phase of `rho10`.
pub fn fidelity_deco_exact(rho11: f64, rho10: Complex64, alpha: Complex64, beta: Complex64, delta_theta: f64) -> f64 {
    1.0 - rho11
        + beta.norm_sqr() * (2.0 * rho11 - 1.0)
        + 2.0 * rho10.norm() * (alpha * beta * Complex64::from_polar(1.0, delta_theta)).re
}

/// Figures of merit of one state transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub c_b_modulus: f64,
    pub theta: f64,
    pub concurrence: f64,
    pub fidelity: f64,
    /// Fidelity from the unsquared-population variant of Bob's state.
    pub fidelity_unsquared_variant: f64,
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl TransferReport {
    pub fn new(alpha: Complex64, beta: Complex64, c_b: Complex64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("|alpha|^2 + |beta|^2 = {norm}")));
        }
        let modulus = c_b.norm();
        if modulus > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!("|c_B| = {modulus} exceeds 1")));
        }
        Ok(Self {
            c_b_modulus: modulus.min(1.0),
            theta: c_b.arg(),
            concurrence: modulus.min(1.0),
            fidelity: fidelity_from_rho_b(alpha, beta, c_b),
            fidelity_unsquared_variant: overlap(alpha, beta, &rho_b_unsquared(alpha, beta, c(modulus))),
            alpha,
            beta,
        })
    }
}

/// Value of `site` at the readout instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub site: usize,
    pub time: f64,
    pub population: f64,
    /// Lab-frame `rho_{site,0}` (`c_site c_0^*` for pure states).
    pub coherence: Complex64,
    /// Lab-frame `c_site` for pure states.
    pub amplitude: Option<Complex64>,
}

impl Readout {
    /// `2 |rho_{site,0}|`; meaningful when index 0 is Alice's qubit.
    pub fn concurrence(&self) -> f64 {
        2.0 * self.coherence.norm()
    }

    pub fn require_signal(self) -> Result<Self> {
        if self.population < SIGNAL_THRESHOLD {
            return Err(Error::NoSignal {
                site: self.site,
                population: self.population,
            });
        }
        Ok(self)
    }
}

/// Streaming readout: keeps the instant of largest population on `site`
/// at or after `window_start`.
#[derive(Debug, Clone)]
pub struct PeakReadout {
    site: usize,
    window_start: f64,
    best: Option<Readout>,
}

impl PeakReadout {
    pub fn new(site: usize, window_start: f64) -> Self {
        Self {
            site,
            window_start,
            best: None,
        }
    }

    pub fn result(&self) -> Option<Readout> {
        self.best
    }
}

impl Observer for PeakReadout {
    fn observe(&mut self, frame: &Frame<'_>) {
        if frame.t < self.window_start - 1e-12 {
            return;
        }
        let population = frame.population(self.site);
        if self.best.is_none_or(|b| population > b.population) {
            self.best = Some(Readout {
                site: self.site,
                time: frame.t,
                population,
                coherence: frame.coherence(self.site),
                amplitude: frame.amplitude(self.site),
            });
        }
    }
}

/// Readout from a recorded trajectory: the sample of largest population on
/// `site` with `t >= window_start`.
pub fn readout(trajectory: &Trajectory, site: usize, window_start: f64) -> Result<Readout> {
    let best = (0..trajectory.len())
        .filter(|&s| trajectory.times[s] >= window_start - 1e-12)
        .max_by(|&a, &b| trajectory.population(a, site).total_cmp(&trajectory.population(b, site)))
        .ok_or_else(|| Error::InvalidArgument(format!("no samples after t = {window_start}")))?;
    Readout {
        site,
        time: trajectory.times[best],
        population: trajectory.population(best, site),
        coherence: trajectory.coherence(best, site),
        amplitude: trajectory.amplitude(best, site),
    }
    .require_signal()
}

/// Accumulated transfer phase at `site`, measured at the readout instant
/// and referenced to the initial phase on `source`.
///
/// Pure trajectories use the amplitudes `c_k`; mixed ones the coherences
/// `rho_{k0}`. Both agree whenever `c_0` is non-zero.
pub fn extract_phase(trajectory: &Trajectory, site: usize, source: usize, window_start: f64) -> Result<f64> {
    let read = readout(trajectory, site, window_start)?;
    let theta = match read.amplitude {
        Some(amplitude) => amplitude.arg() - trajectory.amplitude(0, source).expect("pure").arg(),
        None => read.coherence.arg() - trajectory.coherence(0, source).arg(),
    };
    Ok(wrap_phase(theta))
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn bell_pair_concurrence() {
        let psi = WaveFunction::bell(14, 7).unwrap();
        assert_abs_diff_eq!(concurrence_pure(&psi, 7), 1.0, epsilon = 1e-15);
        let rho = SubspaceDensity::from_pure(&psi, true);
        assert_abs_diff_eq!(concurrence_mixed(&rho, 7).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_alice_weight_no_entanglement() {
        let psi = WaveFunction::localized(5, 3).unwrap();
        assert_eq!(concurrence_pure(&psi, 3), 0.0);
    }

    #[test]
    fn dephased_state_has_zero_concurrence() {
        let mut rho = nalgebra::DMatrix::zeros(4, 4);
        rho[(0, 0)] = c(0.5);
        rho[(2, 2)] = c(0.3);
        rho[(3, 3)] = c(0.2);
        let rho = SubspaceDensity::new(rho, true).unwrap();
        for site in 1..4 {
            assert_eq!(concurrence_mixed(&rho, site).unwrap(), 0.0);
        }
    }

    #[test]
    fn negative_eigenvalue_is_rejected() {
        let mut rho = nalgebra::DMatrix::zeros(3, 3);
        rho[(0, 0)] = c(0.5);
        rho[(1, 1)] = c(0.5);
        rho[(1, 0)] = c(0.9);
        rho[(0, 1)] = c(0.9);
        let rho = SubspaceDensity::from_raw(rho, true);
        assert!(matches!(concurrence_mixed(&rho, 1), Err(Error::NegativeEigenvalue(_))));
    }

    #[test]
    fn fidelity_limits() {
        let a = c(0.6);
        let b = c(0.8);
        assert_abs_diff_eq!(fidelity_from_rho_b(a, b, Complex64::from_polar(1.0, 0.7)), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fidelity_from_rho_b(c(1.0), c(0.0), c(0.2)), 1.0, epsilon = 1e-14);
        assert_eq!(fidelity_from_concurrence(1.0, 0.3), 1.0);
        assert_eq!(fidelity_from_concurrence(0.0, 1.0), 0.0);
        assert_abs_diff_eq!(fidelity_from_concurrence(0.0, 0.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn fab_fidelity_cases() {
        assert_abs_diff_eq!(fidelity_fab(0.0, 0.3, 1.2), 0.7, epsilon = 1e-15);
        // A phase flip of a perfectly transferred equal superposition.
        assert_abs_diff_eq!(fidelity_fab(1.0, 0.5, PI), 0.0, epsilon = 1e-15);
    }

    /// Brute-force overlap oracle: Bob holds `alpha|0> + beta C e^{i d}|1>`
    /// mixed with the vacuum, built from the excitation-conserving channel.
    fn overlap_oracle(alpha: f64, beta: f64, concurrence: f64, delta: f64) -> f64 {
        let received = rho_b(c(alpha), c(beta), Complex64::from_polar(concurrence, delta));
        let psi = [c(alpha), c(beta)];
        let mut total = c(0.0);
        for i in 0..2 {
            for j in 0..2 {
                total += psi[i].conj() * received[(i, j)] * psi[j];
            }
        }
        total.re
    }

    #[test]
    fn fab_fidelity_matches_overlap_oracle() {
        for &(b2, conc, delta) in &[(0.5, 1.0, PI), (0.3, 0.8, 0.4), (0.9, 0.2, -2.0), (0.5, 0.97, 0.05)] {
            let f = fidelity_fab(conc, b2, delta);
            let oracle = overlap_oracle((1.0 - b2).sqrt(), b2.sqrt(), conc, delta);
            assert_abs_diff_eq!(f, oracle, epsilon = 1e-14);
        }
    }

    #[test]
    fn deco_approx_limits() {
        assert_eq!(fidelity_deco_approx(0.5, 0.0, 0.0, 100.0), 1.0);
        assert_eq!(fidelity_deco_approx(0.0, 1.0, 1e-3, 100.0), 1.0);
        assert_eq!(fidelity_deco_approx(1.0, 1.0, 1e-3, 100.0), 1.0);
    }

    #[test]
    fn deco_approx_reported_values() {
        // N = 40 at the optimal ratio: tau = 10 (T1 + T2).
        let (t1, t2) = crate::model::stage_durations(1.0, 100.0, 59.02).unwrap();
        let tau = 10.0 * (t1 + t2);
        let low = fidelity_deco_approx(0.5, 0.0, 1e-4, tau);
        let high = fidelity_deco_approx(0.5, 0.0, 1e-3, tau);
        assert!((low - 0.99).abs() < 0.005, "{low}");
        assert!((high - 0.93).abs() < 0.01, "{high}");
    }

    #[test]
    fn deco_exact_cases() {
        let (a, b) = (0.6, 0.8);
        let f = fidelity_deco_exact(b * b, c(a * b), c(a), c(b), 0.0);
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-14);
        let rho11 = 0.3;
        assert_abs_diff_eq!(
            fidelity_deco_exact(rho11, c(0.0), c(a), c(b), 0.4),
            1.0 - rho11 + b * b * (2.0 * rho11 - 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn wootters_on_generic_x_state() {
        // Pure state sqrt(0.2)|rest> + sqrt(0.5)|n> + sqrt(0.3)|0>: C = 2 sqrt(0.15).
        let psi = WaveFunction::new(vec![c(0.3f64.sqrt()), c(0.5f64.sqrt()), c(0.2f64.sqrt())]).unwrap();
        let pair = ReducedPair::from_wavefunction(&psi, 1);
        assert_abs_diff_eq!(pair.concurrence_wootters().unwrap(), 2.0 * 0.15f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn unsquared_variant_differs_from_closed_form() {
        let report = TransferReport::new(c(0.6), c(0.8), c(0.9)).unwrap();
        assert_abs_diff_eq!(report.fidelity, fidelity_from_concurrence(0.9, 0.64), epsilon = 1e-14);
        assert!((report.fidelity_unsquared_variant - report.fidelity).abs() > 1e-3);
    }

    #[test]
    fn wrap_phase_range() {
        assert_abs_diff_eq!(wrap_phase(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_phase(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_phase(0.5), 0.5, epsilon = 1e-15);
    }

    fn unit_pair() -> impl Strategy<Value = (Complex64, Complex64)> {
        (0.0f64..=1.0, -PI..PI, -PI..PI).prop_map(|(b2, pa, pb)| {
            (Complex64::from_polar((1.0 - b2).sqrt(), pa), Complex64::from_polar(b2.sqrt(), pb))
        })
    }

    proptest! {
        #[test]
        fn rho_b_fidelity_matches_closed_form((alpha, beta) in unit_pair(), modulus in 0.0f64..=1.0, phase in -PI..PI) {
            let f = fidelity_from_rho_b(alpha, beta, Complex64::from_polar(modulus, phase));
            prop_assert!((f - fidelity_from_concurrence(modulus, beta.norm_sqr())).abs() < 1e-10);
        }

        #[test]
        fn deco_exact_matches_overlap(a_sign in prop::bool::ANY, b2 in 0.0f64..=1.0, rho11 in 0.0f64..=1.0, r in 0.0f64..=1.0, delta in -PI..PI) {
            let alpha = if a_sign { (1.0 - b2).sqrt() } else { -(1.0 - b2).sqrt() };
            let beta = b2.sqrt();
            let r = r * (rho11 * (1.0 - rho11)).sqrt();
            let rho10 = Complex64::from_polar(r, delta);
            let bob = Matrix2::new(c(1.0 - rho11), rho10.conj(), rho10, c(rho11));
            let direct = overlap(c(alpha), c(beta), &bob);
            let formula = fidelity_deco_exact(rho11, rho10, c(alpha), c(beta), delta);
            prop_assert!((direct - formula).abs() < 1e-12);
        }

        #[test]
        fn fidelities_stay_in_unit_interval(conc in 0.0f64..=1.0, b2 in 0.0f64..=1.0, delta in -PI..PI, gt in 0.0f64..10.0) {
            for f in [
                fidelity_from_concurrence(conc, b2),
                fidelity_fab(conc, b2, delta),
                fidelity_deco_approx(b2, delta, gt, 1.0),
            ] {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f), "{}", f);
            }
        }

        #[test]
        fn wootters_agrees_with_shortcut(raw in prop::collection::vec(-1.0f64..1.0, 12), keep in 0.0f64..=1.0) {
            // Random pure state, partially dephased.
            let amps: Vec<Complex64> = raw.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let psi = WaveFunction::new(amps.iter().map(|a| a / norm).collect()).unwrap();
            let mut rho = SubspaceDensity::from_pure(&psi, true);
            for n in 0..6 {
                for m in 0..6 {
                    if n != m {
                        rho.rho[(n, m)] *= keep;
                    }
                }
            }
            for site in 1..6 {
                let pair = ReducedPair::from_density(&rho, site);
                prop_assert!((pair.concurrence_wootters().unwrap() - pair.concurrence_fast()).abs() < 1e-9);
            }
        }

        #[test]
        fn pure_concurrences_obey_normalization_bound(raw in prop::collection::vec(-1.0f64..1.0, 16)) {
            let amps: Vec<Complex64> = raw.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let psi = WaveFunction::new(amps.iter().map(|a| a / norm).collect()).unwrap();
            let total: f64 = (1..8).map(|n| concurrence_pure(&psi, n).powi(2)).sum();
            prop_assert!(total <= 1.0 + 1e-12);
        }
    }
}
