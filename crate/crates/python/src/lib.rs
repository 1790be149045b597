//! Python bindings for `cdt-router`.
//!
//! Chain, drive and error-model descriptions are exposed as classes; the
//! experiments are plain functions returning dictionaries of floats and
//! lists. Long computations release the GIL.

use cdt_router::dynamics::Propagation;
use cdt_router::experiments::{self, ArrivalOffset, EnsembleOptions, PhaseReference, RatchetParameters};
use cdt_router::{bessel, metrics, model, Error};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(cdt_router_py, NumericalError, PyRuntimeError, "Propagation or readout failed.");

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidChain(_)
        | Error::InvalidProtocol(_)
        | Error::DegenerateProtocol { .. }
        | Error::InvalidState(_)
        | Error::InvalidArgument(_) => PyValueError::new_err(err.to_string()),
        _ => NumericalError::new_err(err.to_string()),
    }
}

/// Static chain description: splittings, couplings and the node site.
#[pyclass(name = "ChainSpec", module = "cdt_router_py", from_py_object)]
#[derive(Clone)]
struct PyChainSpec {
    inner: model::ChainSpec,
}

#[pymethods]
impl PyChainSpec {
    #[new]
    #[pyo3(signature = (n_sites, base_splitting, lambda1, lambda2, node_index=None, couplings=None, include_alice=true))]
    fn new(
        n_sites: usize,
        base_splitting: f64,
        lambda1: f64,
        lambda2: f64,
        node_index: Option<usize>,
        couplings: Option<Vec<f64>>,
        include_alice: bool,
    ) -> PyResult<Self> {
        let node = node_index.unwrap_or_else(|| model::central_node(n_sites));
        let mut spec = model::ChainSpec::uniform(n_sites, base_splitting, lambda1, lambda2, node).map_err(to_py)?;
        if let Some(js) = couplings {
            spec = spec.with_couplings(js).map_err(to_py)?;
        }
        Ok(Self {
            inner: spec.with_alice(include_alice),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: model::ChainSpec =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites
    }

    #[getter]
    fn node_index(&self) -> usize {
        self.inner.node_index
    }

    #[getter]
    fn couplings(&self) -> Vec<f64> {
        self.inner.couplings.clone()
    }

    #[getter]
    fn lambda1(&self) -> f64 {
        self.inner.lambda1
    }

    #[getter]
    fn lambda2(&self) -> f64 {
        self.inner.lambda2
    }

    #[getter]
    fn include_alice(&self) -> bool {
        self.inner.include_alice
    }

    fn bob_end(&self) -> usize {
        self.inner.bob_end()
    }

    fn charlie_end(&self) -> usize {
        self.inner.charlie_end()
    }

    /// Static splittings `b_1..b_N`.
    fn splittings(&self) -> Vec<f64> {
        model::ratchet_profile(&self.inner)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "ChainSpec(n_sites={}, base_splitting={}, lambda1={}, lambda2={}, node_index={})",
            s.n_sites, s.base_splitting, s.lambda1, s.lambda2, s.node_index
        )
    }
}

/// Two-stage ac drive.
#[pyclass(name = "DriveProtocol", module = "cdt_router_py", from_py_object)]
#[derive(Clone)]
struct PyDriveProtocol {
    inner: model::DriveProtocol,
}

#[pymethods]
impl PyDriveProtocol {
    #[new]
    #[pyo3(signature = (omega, t1, t2, n_cycles=None, commensurate=false))]
    fn new(omega: f64, t1: f64, t2: f64, n_cycles: Option<u32>, commensurate: bool) -> PyResult<Self> {
        let mut inner = model::DriveProtocol::with_durations(omega, (t1, t2))
            .map_err(to_py)?
            .with_commensuration(commensurate);
        if let Some(n) = n_cycles {
            inner = inner.with_cycles(n);
        }
        Ok(Self { inner })
    }

    /// Drive with stage durations chosen for `chain`.
    #[staticmethod]
    fn for_chain(chain: &PyChainSpec, omega: f64) -> PyResult<Self> {
        Ok(Self {
            inner: model::DriveProtocol::for_chain(&chain.inner, omega).map_err(to_py)?,
        })
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    #[getter]
    fn stage_durations(&self) -> (f64, f64) {
        self.inner.durations()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    fn __repr__(&self) -> String {
        let (t1, t2) = self.inner.durations();
        format!("DriveProtocol(omega={}, t1={t1}, t2={t2})", self.inner.omega)
    }
}

/// Uniform fabrication-error widths and the ensemble base seed.
#[pyclass(name = "ErrorModel", module = "cdt_router_py", from_py_object)]
#[derive(Clone)]
struct PyErrorModel {
    inner: model::ErrorModel,
}

#[pymethods]
impl PyErrorModel {
    #[new]
    #[pyo3(signature = (eps_j=0.0, eps_b=0.0, eps_t=0.0, seed=0))]
    fn new(eps_j: f64, eps_b: f64, eps_t: f64, seed: u64) -> PyResult<Self> {
        let inner = model::ErrorModel {
            eps_j,
            eps_b,
            eps_t,
            seed,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn fabrication_defaults(seed: u64) -> Self {
        Self {
            inner: model::ErrorModel::fabrication_defaults(seed),
        }
    }

    fn __repr__(&self) -> String {
        let e = &self.inner;
        format!("ErrorModel(eps_j={}, eps_b={}, eps_t={}, seed={})", e.eps_j, e.eps_b, e.eps_t, e.seed)
    }
}

fn parse_offset(offset: &Bound<'_, PyAny>) -> PyResult<ArrivalOffset> {
    if let Ok(t) = offset.extract::<f64>() {
        return Ok(ArrivalOffset::Time(t));
    }
    match offset.extract::<String>()?.as_str() {
        "zero" => Ok(ArrivalOffset::Zero),
        "first_stage" => Ok(ArrivalOffset::FirstStage),
        "half_first_stage" => Ok(ArrivalOffset::HalfFirstStage),
        other => Err(PyValueError::new_err(format!(
            "offset must be a time or one of 'zero', 'first_stage', 'half_first_stage'; got {other:?}"
        ))),
    }
}

fn propagation(omega: f64, dt_max: Option<f64>) -> Propagation {
    let options = Propagation::for_omega(omega);
    match dt_max {
        Some(dt) => options.with_dt_max(dt),
        None => options,
    }
}

/// Bessel function of the first kind, order zero.
#[pyfunction]
fn j0(x: f64) -> f64 {
    bessel::j0(x)
}

/// First root of J0.
#[pyfunction]
fn xi0() -> f64 {
    bessel::xi0()
}

#[pyfunction]
fn central_node(n_sites: usize) -> usize {
    model::central_node(n_sites)
}

/// `(T1, T2)` for the given coupling and splitting steps.
#[pyfunction]
fn stage_durations(coupling: f64, lambda1: f64, lambda2: f64) -> PyResult<(f64, f64)> {
    model::stage_durations(coupling, lambda1, lambda2).map_err(to_py)
}

#[pyfunction]
fn period_factor(ratio: f64) -> f64 {
    experiments::period_factor(ratio)
}

/// Returns `(ratio, period_factor)` at the shortest protocol period.
#[pyfunction]
fn optimize_ratio() -> PyResult<(f64, f64)> {
    let opt = experiments::optimize_ratio().map_err(to_py)?;
    Ok((opt.ratio, opt.period_factor))
}

#[pyfunction]
fn fidelity_from_concurrence(concurrence: f64, beta_sq: f64) -> f64 {
    metrics::fidelity_from_concurrence(concurrence, beta_sq)
}

#[pyfunction]
fn fidelity_fab(concurrence: f64, beta_sq: f64, delta_theta: f64) -> f64 {
    metrics::fidelity_fab(concurrence, beta_sq, delta_theta)
}

#[pyfunction]
fn fidelity_deco_approx(beta_sq: f64, delta_theta: f64, gamma: f64, tau_ab: f64) -> f64 {
    metrics::fidelity_deco_approx(beta_sq, delta_theta, gamma, tau_ab)
}

/// Routes half of a Bell pair from the node to one end of the chain.
///
/// `offset` is a start time or one of `'zero'`, `'first_stage'`,
/// `'half_first_stage'`. Returns concurrences at both ends plus the sampled
/// populations (`populations[i][k]` at `times[i]`, basis index `k`).
#[pyfunction]
#[pyo3(signature = (chain, protocol, offset=None, gamma=0.0, dt_max=None))]
fn run_routing<'py>(
    py: Python<'py>,
    chain: &PyChainSpec,
    protocol: &PyDriveProtocol,
    offset: Option<&Bound<'py, PyAny>>,
    gamma: f64,
    dt_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let offset = offset.map(parse_offset).transpose()?.unwrap_or(ArrivalOffset::Zero);
    let (spec, protocol) = (chain.inner.clone(), protocol.inner.clone());
    let options = propagation(protocol.omega, dt_max);
    let result = py
        .detach(|| {
            if gamma > 0.0 {
                experiments::run_routing_dephased(&spec, &protocol, offset, gamma, &options)
            } else {
                experiments::run_routing(&spec, &protocol, offset, &options)
            }
        })
        .map_err(to_py)?;
    let traj = &result.trajectory;
    let populations: Vec<Vec<f64>> = (0..traj.len())
        .map(|s| (0..traj.dim()).map(|k| traj.population(s, k)).collect())
        .collect();
    let out = PyDict::new(py);
    out.set_item("c_bob", result.c_bob())?;
    out.set_item("c_charlie", result.c_charlie())?;
    out.set_item("bob_site", result.bob.site)?;
    out.set_item("charlie_site", result.charlie.site)?;
    out.set_item("bob_time", result.bob.time)?;
    out.set_item("t_final", result.t_final)?;
    out.set_item("max_drift", traj.max_drift())?;
    out.set_item("times", traj.times.clone())?;
    out.set_item("populations", populations)?;
    Ok(out)
}

/// Transfers `alpha|0> + beta|1>` from the node to Bob's end.
#[pyfunction]
#[pyo3(signature = (chain, protocol, alpha, beta, gamma=0.0, dt_max=None))]
fn run_transfer<'py>(
    py: Python<'py>,
    chain: &PyChainSpec,
    protocol: &PyDriveProtocol,
    alpha: Complex64,
    beta: Complex64,
    gamma: f64,
    dt_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let (spec, protocol) = (chain.inner.clone(), protocol.inner.clone());
    let options = propagation(protocol.omega, dt_max);
    let result = py
        .detach(|| experiments::run_transfer(&spec, &protocol, alpha, beta, gamma, &options))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("fidelity", result.fidelity)?;
    out.set_item("theta", result.theta)?;
    out.set_item("c_b_modulus", result.report.c_b_modulus)?;
    out.set_item("concurrence", result.report.concurrence)?;
    out.set_item("fidelity_unsquared_variant", result.report.fidelity_unsquared_variant)?;
    out.set_item("site", result.readout.site)?;
    out.set_item("population", result.readout.population)?;
    out.set_item("t_final", result.t_final)?;
    Ok(out)
}

/// Monte Carlo over fabrication errors. Results depend only on the inputs
/// and `errors.seed`, not on `workers`.
#[pyfunction]
#[pyo3(signature = (chain, protocol, errors, realizations, gamma=0.0, beta_sq=0.5, per_realization_phase=false, workers=None))]
#[allow(clippy::too_many_arguments)]
fn run_ensemble<'py>(
    py: Python<'py>,
    chain: &PyChainSpec,
    protocol: &PyDriveProtocol,
    errors: &PyErrorModel,
    realizations: usize,
    gamma: f64,
    beta_sq: f64,
    per_realization_phase: bool,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let (spec, protocol, errors) = (chain.inner.clone(), protocol.inner.clone(), errors.inner.clone());
    let mut options = EnsembleOptions::new(realizations, protocol.omega);
    options.gamma = gamma;
    options.beta_sq = beta_sq;
    options.workers = workers;
    if per_realization_phase {
        options.phase_reference = PhaseReference::PerRealization;
    }
    let result = py
        .detach(|| experiments::run_ensemble(&spec, &protocol, &errors, &options))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("concurrence", result.records.iter().map(|r| r.concurrence).collect::<Vec<_>>())?;
    out.set_item("fidelity", result.records.iter().map(|r| r.fidelity).collect::<Vec<_>>())?;
    out.set_item("theta", result.records.iter().map(|r| r.theta).collect::<Vec<_>>())?;
    out.set_item("theta_mean", result.theta_mean)?;
    out.set_item("mean_concurrence", result.mean_concurrence)?;
    out.set_item("std_concurrence", result.std_concurrence)?;
    out.set_item("mean_fidelity", result.mean_fidelity)?;
    out.set_item("std_fidelity", result.std_fidelity)?;
    out.set_item("histogram_bin", result.histogram.bin_width)?;
    out.set_item("histogram", result.histogram.counts.clone())?;
    out.set_item("base_seed", result.base_seed)?;
    Ok(out)
}

/// Bob-end concurrence against chain length, one series per frequency.
/// `c_estimate` comes from the effective (rotating-wave) model.
#[pyfunction]
#[pyo3(signature = (base_splitting, lambda1, lambda2, omegas, lengths, dt_max=None))]
fn sweep_frequency_length<'py>(
    py: Python<'py>,
    base_splitting: f64,
    lambda1: f64,
    lambda2: f64,
    omegas: Vec<f64>,
    lengths: Vec<usize>,
    dt_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let ratchet = RatchetParameters {
        base_splitting,
        lambda1,
        lambda2,
    };
    let result = py
        .detach(|| experiments::sweep_frequency_length(ratchet, &omegas, &lengths, dt_max))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("lengths", lengths)?;
    out.set_item("omegas", result.series.iter().map(|s| s.value).collect::<Vec<_>>())?;
    out.set_item("c_sim", result.series.iter().map(|s| s.c_sim.clone()).collect::<Vec<_>>())?;
    out.set_item("c_estimate", result.series.iter().map(|s| s.c_estimate.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

#[pymodule]
fn cdt_router_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyChainSpec>()?;
    m.add_class::<PyDriveProtocol>()?;
    m.add_class::<PyErrorModel>()?;
    m.add_function(wrap_pyfunction!(j0, m)?)?;
    m.add_function(wrap_pyfunction!(xi0, m)?)?;
    m.add_function(wrap_pyfunction!(central_node, m)?)?;
    m.add_function(wrap_pyfunction!(stage_durations, m)?)?;
    m.add_function(wrap_pyfunction!(period_factor, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_from_concurrence, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_fab, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_deco_approx, m)?)?;
    m.add_function(wrap_pyfunction!(run_routing, m)?)?;
    m.add_function(wrap_pyfunction!(run_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_frequency_length, m)?)?;
    Ok(())
}
