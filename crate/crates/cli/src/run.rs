use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cdt_router::dynamics::Propagation;
use cdt_router::experiments::{
    decoherence_sweep, optimize_ratio, run_ensemble, run_routing, run_routing_dephased, run_transfer,
    sweep_frequency_length, ArrivalOffset, EnsembleOptions, RoutingResult,
};
use cdt_router::metrics::Readout;
use cdt_router::model::DriveProtocol;
use cdt_router::Error as CoreError;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, Diagnostic, Kind, RunConfig};

/// Overrides that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub dt_max: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] CoreError),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Output { .. } => 1,
        }
    }

    /// Machine-readable description printed on stderr.
    pub fn to_json(&self) -> Value {
        match self {
            RunError::Config(e) => json!({
                "error": "config",
                "message": e.to_string(),
                "diagnostics": e.diagnostics(),
            }),
            RunError::Numerical(e) => json!({
                "error": "numerical",
                "message": e.to_string(),
                "detail": format!("{e:?}"),
            }),
            RunError::Output { path, message } => json!({
                "error": "output",
                "message": message,
                "path": path,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kind: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub tool: &'static str,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary: Value,
    pub manifest: Manifest,
}

/// Applies `overrides` and re-validates, so a bad flag is reported the same
/// way as a bad file entry.
pub fn apply_overrides(mut config: RunConfig, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    if let Some(out) = &overrides.out {
        config.output_dir = Some(out.clone());
    }
    if let Some(workers) = overrides.workers {
        config.workers = Some(workers);
    }
    if let Some(dt) = overrides.dt_max {
        config.dt_max = Some(dt);
    }
    if let (Some(seed), Some(errors)) = (overrides.seed, config.errors.as_mut()) {
        errors.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn invalid(d: Diagnostic) -> RunError {
    RunError::Config(ConfigError::Invalid(vec![d]))
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Output {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| RunError::Output {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(BufWriter<File>) -> cdt_router::Result<()>) -> Result<(), RunError> {
        let file = self.create(name)?;
        write(file).map_err(|e| RunError::Output {
            path: self.dir.join(name),
            message: e.to_string(),
        })
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), RunError> {
        let file = self.create(name)?;
        serde_json::to_writer_pretty(file, value).map_err(|e| RunError::Output {
            path: self.dir.join(name),
            message: e.to_string(),
        })
    }
}

fn propagation(config: &RunConfig, omega: f64) -> Propagation {
    let mut options = Propagation::for_omega(omega);
    if let Some(dt) = config.dt_max {
        options = options.with_dt_max(dt);
    }
    if let Some(s) = config.samples_per_stage {
        options = options.with_samples_per_stage(s);
    }
    options
}

fn complex([re, im]: [f64; 2]) -> Complex64 {
    Complex64::new(re, im)
}

fn readout_json(r: &Readout) -> Value {
    json!({
        "site": r.site,
        "time": r.time,
        "population": r.population,
        "concurrence": r.concurrence(),
    })
}

fn protocol_json(protocol: &DriveProtocol) -> Value {
    let (t1, t2) = protocol.durations();
    json!({ "omega": protocol.omega, "t1": t1, "t2": t2, "period": protocol.period() })
}

fn routing(config: &RunConfig, offset: ArrivalOffset, files: &mut Artifacts) -> Result<Value, RunError> {
    let (spec, protocol) = config.build_protocol().map_err(invalid)?;
    let options = propagation(config, protocol.omega);
    let gamma = config.gamma.unwrap_or(0.0);
    let result: RoutingResult = if gamma > 0.0 {
        run_routing_dephased(&spec, &protocol, offset, gamma, &options)?
    } else {
        run_routing(&spec, &protocol, offset, &options)?
    };
    files.csv("trajectory.csv", |w| result.trajectory.write_csv(w))?;
    Ok(json!({
        "protocol": protocol_json(&protocol),
        "start_offset": offset.start_offset(&protocol),
        "gamma": gamma,
        "c_bob": result.c_bob(),
        "c_charlie": result.c_charlie(),
        "bob": readout_json(&result.bob),
        "charlie": readout_json(&result.charlie),
        "window_start": result.window_start,
        "t_final": result.t_final,
        "max_drift": result.trajectory.max_drift(),
    }))
}

fn execute(config: &RunConfig, files: &mut Artifacts) -> Result<Value, RunError> {
    match config.kind {
        Kind::Route => routing(config, config.offset.unwrap_or(ArrivalOffset::Zero), files),
        Kind::Split => routing(config, ArrivalOffset::HalfFirstStage, files),
        Kind::Sweep => {
            let ratchet = config.ratchet.expect("validated");
            let omegas = config.omegas.as_deref().unwrap_or_default();
            let lengths = config.lengths.as_deref().unwrap_or_default();
            let result = sweep_frequency_length(ratchet, omegas, lengths, config.dt_max)?;
            files.csv("sweep.csv", |w| result.write_csv(w))?;
            Ok(serde_json::to_value(&result).expect("serializable"))
        }
        Kind::Decohere => {
            let ratchet = config.ratchet.expect("validated");
            let gammas = config.gammas.as_deref().unwrap_or_default();
            let lengths = config.lengths.as_deref().unwrap_or_default();
            let omega = config.omega.expect("validated");
            let result = decoherence_sweep(ratchet, omega, gammas, lengths, config.dt_max)?;
            files.csv("decoherence.csv", |w| result.write_csv(w))?;
            Ok(serde_json::to_value(&result).expect("serializable"))
        }
        Kind::Ensemble => {
            let (spec, protocol) = config.build_protocol().map_err(invalid)?;
            let errors = config.errors.clone().expect("validated");
            let mut options = EnsembleOptions::new(config.realizations.expect("validated"), protocol.omega);
            options.gamma = config.gamma.unwrap_or(0.0);
            options.beta_sq = config.beta_sq.unwrap_or(0.5);
            options.phase_reference = config.phase_reference.unwrap_or_default();
            options.workers = config.workers;
            if let Some(dt) = config.dt_max {
                options.propagation = options.propagation.with_dt_max(dt);
            }
            let result = run_ensemble(&spec, &protocol, &errors, &options)?;
            files.csv("histogram.csv", |w| result.histogram.write_csv(w))?;
            files.csv("realizations.csv", |w| {
                let mut out = csv::Writer::from_writer(w);
                out.write_record(["index", "concurrence", "fidelity", "theta[rad]"])?;
                for r in &result.records {
                    out.write_record([
                        r.index.to_string(),
                        format!("{:.12e}", r.concurrence),
                        format!("{:.12e}", r.fidelity),
                        format!("{:.12e}", r.theta),
                    ])?;
                }
                out.flush()?;
                Ok(())
            })?;
            Ok(json!({
                "protocol": protocol_json(&protocol),
                "realizations": result.realizations,
                "base_seed": result.base_seed,
                "phase_reference": result.phase_reference,
                "theta_mean": result.theta_mean,
                "mean_concurrence": result.mean_concurrence,
                "std_concurrence": result.std_concurrence,
                "mean_fidelity": result.mean_fidelity,
                "std_fidelity": result.std_fidelity,
                "histogram_mode": result.histogram.mode(),
            }))
        }
        Kind::Optimize => {
            let opt = optimize_ratio()?;
            Ok(json!({
                "ratio": opt.ratio,
                "period": opt.period_factor * std::f64::consts::PI,
                "period_factor": opt.period_factor,
            }))
        }
        Kind::Transfer => {
            let (spec, protocol) = config.build_protocol().map_err(invalid)?;
            let options = propagation(config, protocol.omega);
            let alpha = complex(config.alpha_or_default());
            let beta = complex(config.beta_or_default());
            let gamma = config.gamma.unwrap_or(0.0);
            let result = run_transfer(&spec, &protocol, alpha, beta, gamma, &options)?;
            Ok(json!({
                "protocol": protocol_json(&protocol),
                "gamma": gamma,
                "theta": result.theta,
                "fidelity": result.fidelity,
                "c_b_modulus": result.report.c_b_modulus,
                "concurrence": result.report.concurrence,
                "fidelity_unsquared_variant": result.report.fidelity_unsquared_variant,
                "readout": readout_json(&result.readout),
                "t_final": result.t_final,
            }))
        }
    }
}

/// Runs one experiment and writes its artifacts plus `summary.json` and
/// `manifest.json` into the output directory (default `out/<kind>`).
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let started = Instant::now();
    let out_dir = config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(config.kind.name()));
    let mut files = Artifacts::new(&out_dir)?;
    let mut summary = execute(config, &mut files)?;
    let wall_time_s = started.elapsed().as_secs_f64();
    if let Value::Object(map) = &mut summary {
        map.insert("kind".to_string(), json!(config.kind.name()));
        map.insert("runtime_s".to_string(), json!(wall_time_s));
    }
    files.json("summary.json", &summary)?;
    let mut outputs = files.written.clone();
    outputs.push("manifest.json".to_string());
    let manifest = Manifest {
        kind: config.kind.name(),
        config_sha256: config.content_hash(),
        seed: config.errors.as_ref().map_or(0, |e| e.seed),
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s,
        outputs,
    };
    files.json("manifest.json", &manifest)?;
    Ok(RunOutcome {
        out_dir,
        summary,
        manifest,
    })
}
