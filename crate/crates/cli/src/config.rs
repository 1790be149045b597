//! Run-configuration schema, parsing and validation.
//!
//! A configuration is a single JSON object. Unknown keys are rejected, and
//! every key must be relevant to the selected `kind`. Energies are in units
//! of `J`, times in units of `1/J`.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use cdt_router::experiments::{ArrivalOffset, PhaseReference, RatchetParameters};
use cdt_router::model::{central_node, stage_durations, ChainSpec, DriveProtocol, ErrorModel};
use cdt_router::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Route,
    Split,
    Sweep,
    Ensemble,
    Decohere,
    Optimize,
    Transfer,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Route => "route",
            Kind::Split => "split",
            Kind::Sweep => "sweep",
            Kind::Ensemble => "ensemble",
            Kind::Decohere => "decohere",
            Kind::Optimize => "optimize",
            Kind::Transfer => "transfer",
        }
    }

    /// Keys this kind requires and keys it merely accepts.
    fn keys(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Kind::Route => (&["chain", "protocol"], &["offset", "gamma"]),
            Kind::Split => (&["chain", "protocol"], &["gamma"]),
            Kind::Sweep => (&["ratchet", "omegas", "lengths"], &[]),
            Kind::Decohere => (&["ratchet", "omega", "gammas", "lengths"], &[]),
            Kind::Ensemble => (
                &["chain", "protocol", "errors", "realizations"],
                &["gamma", "beta_sq", "phase_reference"],
            ),
            Kind::Optimize => (&[], &[]),
            Kind::Transfer => (&["chain", "protocol"], &["alpha", "beta", "gamma"]),
        }
    }
}

/// Bond strengths: one value for every bond, or one per bond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Uniform(f64),
    PerBond(Vec<f64>),
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling::Uniform(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_sites: usize,
    #[serde(default)]
    pub coupling: Coupling,
    pub base_splitting: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Defaults to the central site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub omega: f64,
    /// `(T1, T2)`; derived from the chain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_durations: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cycles: Option<u32>,
    #[serde(default)]
    pub commensurate: bool,
}

/// One complex amplitude as `[re, im]`.
pub type ComplexPair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<ArrivalOffset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratchet: Option<RatchetParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_reference: Option<PhaseReference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<ComplexPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<ComplexPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    /// Trajectory samples recorded per drive stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_stage: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{} invalid field(s): {}", .0.len(), join(.0))]
    Invalid(Vec<Diagnostic>),
}

impl ConfigError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ConfigError::Read { path, message } => vec![Diagnostic::new(path.display().to_string(), message.clone())],
            ConfigError::Invalid(d) => d.clone(),
        }
    }
}

fn join(diagnostics: &[Diagnostic]) -> String {
    diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_str(&text)
}

/// Parses and validates a configuration document.
pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "(root)".to_string() } else { path };
        ConfigError::Invalid(vec![Diagnostic::new(path, e.inner().to_string())])
    })?;
    config.validate()?;
    Ok(config)
}

fn positive(diags: &mut Vec<Diagnostic>, path: &str, value: f64, what: &str) {
    if !(value.is_finite() && value > 0.0) {
        diags.push(Diagnostic::new(path, format!("{what} must be > 0, got {value}")));
    }
}

fn non_negative(diags: &mut Vec<Diagnostic>, path: &str, value: f64, what: &str) {
    if !(value.is_finite() && value >= 0.0) {
        diags.push(Diagnostic::new(path, format!("{what} must be >= 0, got {value}")));
    }
}

fn increasing<T: PartialOrd + Copy>(diags: &mut Vec<Diagnostic>, path: &str, values: &[T]) {
    if values.is_empty() {
        diags.push(Diagnostic::new(path, "must not be empty"));
    } else if values.windows(2).any(|w| !(w[1] > w[0])) {
        diags.push(Diagnostic::new(path, "must be strictly increasing"));
    }
}

fn ratchet_diagnostics(diags: &mut Vec<Diagnostic>, prefix: &str, lambda1: f64, lambda2: f64, base: f64) {
    positive(diags, &format!("{prefix}.lambda1"), lambda1, "splitting step");
    positive(diags, &format!("{prefix}.lambda2"), lambda2, "splitting step");
    if lambda1 == lambda2 {
        diags.push(Diagnostic::new(
            format!("{prefix}.lambda2"),
            "degenerate ratchet: lambda1 == lambda2 freezes every bond in both stages",
        ));
    }
    if !base.is_finite() {
        diags.push(Diagnostic::new(format!("{prefix}.base_splitting"), "must be finite"));
    }
}

fn core_diagnostic(path: &str, err: CoreError) -> Diagnostic {
    let message = match err {
        CoreError::InvalidChain(m) | CoreError::InvalidProtocol(m) | CoreError::InvalidArgument(m) => m,
        other => other.to_string(),
    };
    Diagnostic::new(path, message)
}

impl RunConfig {
    fn present_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut mark = |present: bool, key: &'static str| {
            if present {
                keys.push(key);
            }
        };
        mark(self.chain.is_some(), "chain");
        mark(self.protocol.is_some(), "protocol");
        mark(self.errors.is_some(), "errors");
        mark(self.offset.is_some(), "offset");
        mark(self.ratchet.is_some(), "ratchet");
        mark(self.omega.is_some(), "omega");
        mark(self.omegas.is_some(), "omegas");
        mark(self.lengths.is_some(), "lengths");
        mark(self.gammas.is_some(), "gammas");
        mark(self.gamma.is_some(), "gamma");
        mark(self.realizations.is_some(), "realizations");
        mark(self.beta_sq.is_some(), "beta_sq");
        mark(self.phase_reference.is_some(), "phase_reference");
        mark(self.alpha.is_some(), "alpha");
        mark(self.beta.is_some(), "beta");
        keys
    }

    /// Collects every problem instead of stopping at the first one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut diags = Vec::new();
        let (required, optional) = self.kind.keys();
        let present = self.present_keys();
        for key in required {
            if !present.contains(key) {
                diags.push(Diagnostic::new(*key, format!("required for kind `{}`", self.kind.name())));
            }
        }
        for key in &present {
            if !required.contains(key) && !optional.contains(key) {
                diags.push(Diagnostic::new(*key, format!("not used by kind `{}`", self.kind.name())));
            }
        }

        if let Some(chain) = &self.chain {
            self.chain_diagnostics(chain, &mut diags);
        }
        if let Some(protocol) = &self.protocol {
            positive(&mut diags, "protocol.omega", protocol.omega, "drive frequency");
            if let Some((t1, t2)) = protocol.stage_durations {
                positive(&mut diags, "protocol.stage_durations[0]", t1, "stage time");
                positive(&mut diags, "protocol.stage_durations[1]", t2, "stage time");
            }
            if protocol.n_cycles == Some(0) {
                diags.push(Diagnostic::new("protocol.n_cycles", "must be >= 1"));
            }
        }
        if let Some(errors) = &self.errors {
            non_negative(&mut diags, "errors.eps_j", errors.eps_j, "error width");
            non_negative(&mut diags, "errors.eps_b", errors.eps_b, "error width");
            non_negative(&mut diags, "errors.eps_t", errors.eps_t, "error width");
        }
        if let Some(ArrivalOffset::Time(t)) = self.offset {
            non_negative(&mut diags, "offset.value", t, "start time");
        }
        if let Some(r) = &self.ratchet {
            ratchet_diagnostics(&mut diags, "ratchet", r.lambda1, r.lambda2, r.base_splitting);
        }
        if let Some(omega) = self.omega {
            positive(&mut diags, "omega", omega, "drive frequency");
        }
        if let Some(omegas) = &self.omegas {
            for (i, &w) in omegas.iter().enumerate() {
                positive(&mut diags, &format!("omegas[{i}]"), w, "drive frequency");
            }
            increasing(&mut diags, "omegas", omegas);
        }
        if let Some(lengths) = &self.lengths {
            for (i, &n) in lengths.iter().enumerate() {
                if n < 2 {
                    diags.push(Diagnostic::new(format!("lengths[{i}]"), format!("chain needs >= 2 sites, got {n}")));
                }
            }
            increasing(&mut diags, "lengths", lengths);
        }
        if let Some(gammas) = &self.gammas {
            for (i, &g) in gammas.iter().enumerate() {
                non_negative(&mut diags, &format!("gammas[{i}]"), g, "dephasing rate");
            }
            increasing(&mut diags, "gammas", gammas);
        }
        if let Some(g) = self.gamma {
            non_negative(&mut diags, "gamma", g, "dephasing rate");
        }
        if let Some(m) = self.realizations {
            if m < 2 {
                diags.push(Diagnostic::new("realizations", format!("need at least 2, got {m}")));
            }
        }
        if let Some(b) = self.beta_sq {
            if !(0.0..=1.0).contains(&b) {
                diags.push(Diagnostic::new("beta_sq", format!("must lie in [0, 1], got {b}")));
            }
        }
        if self.alpha.is_some() || self.beta.is_some() {
            let norm: f64 = [self.alpha_or_default(), self.beta_or_default()]
                .iter()
                .map(|[re, im]| re * re + im * im)
                .sum();
            if (norm - 1.0).abs() > 1e-9 {
                diags.push(Diagnostic::new("beta", format!("|alpha|^2 + |beta|^2 must be 1, got {norm}")));
            }
        }
        if self.workers == Some(0) {
            diags.push(Diagnostic::new("workers", "must be >= 1"));
        }
        if self.samples_per_stage == Some(0) {
            diags.push(Diagnostic::new("samples_per_stage", "must be >= 1"));
        }
        if let Some(dt) = self.dt_max {
            positive(&mut diags, "dt_max", dt, "time step");
            if let Some(omega) = self.max_omega() {
                let limit = 2.0 * PI / omega / 32.0;
                if dt > limit * (1.0 + 1e-12) {
                    diags.push(Diagnostic::new(
                        "dt_max",
                        format!("{dt} exceeds 1/32 of the fastest carrier period ({limit})"),
                    ));
                }
            }
        }

        // Cross-field checks that need the core constructors; only worth
        // running once the individual fields are sane.
        if diags.is_empty() {
            if let (Some(_), Some(_)) = (&self.chain, &self.protocol) {
                if let Err(d) = self.build_protocol() {
                    diags.push(d);
                }
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(diags))
        }
    }

    fn chain_diagnostics(&self, chain: &ChainConfig, diags: &mut Vec<Diagnostic>) {
        let n = chain.n_sites;
        if n < 2 {
            diags.push(Diagnostic::new("chain.n_sites", format!("chain needs >= 2 sites, got {n}")));
        }
        match &chain.coupling {
            Coupling::Uniform(j) => positive(diags, "chain.coupling", *j, "coupling"),
            Coupling::PerBond(js) => {
                if js.len() != n.saturating_sub(1) {
                    diags.push(Diagnostic::new(
                        "chain.coupling",
                        format!("expected {} bond values, got {}", n.saturating_sub(1), js.len()),
                    ));
                }
                for (i, &j) in js.iter().enumerate() {
                    positive(diags, &format!("chain.coupling[{i}]"), j, "coupling");
                }
            }
        }
        ratchet_diagnostics(diags, "chain", chain.lambda1, chain.lambda2, chain.base_splitting);
        if let Some(node) = chain.node_index {
            if !(1..=n).contains(&node) {
                diags.push(Diagnostic::new("chain.node_index", format!("{node} outside 1..={n}")));
            }
        }
    }

    fn max_omega(&self) -> Option<f64> {
        let mut all: Vec<f64> = self.omegas.clone().unwrap_or_default();
        all.extend(self.omega);
        all.extend(self.protocol.as_ref().map(|p| p.omega));
        all.into_iter().filter(|w| w.is_finite() && *w > 0.0).reduce(f64::max)
    }

    pub fn alpha_or_default(&self) -> ComplexPair {
        self.alpha.unwrap_or([std::f64::consts::FRAC_1_SQRT_2, 0.0])
    }

    pub fn beta_or_default(&self) -> ComplexPair {
        self.beta.unwrap_or([std::f64::consts::FRAC_1_SQRT_2, 0.0])
    }

    /// Core chain description. Only valid after [`RunConfig::validate`].
    pub fn build_chain(&self) -> Result<ChainSpec, Diagnostic> {
        let chain = self
            .chain
            .as_ref()
            .ok_or_else(|| Diagnostic::new("chain", "missing"))?;
        let n = chain.n_sites;
        let node = chain.node_index.unwrap_or_else(|| central_node(n));
        let spec = ChainSpec::uniform(n, chain.base_splitting, chain.lambda1, chain.lambda2, node)
            .map_err(|e| core_diagnostic("chain", e))?;
        match &chain.coupling {
            Coupling::Uniform(j) => spec.with_couplings(vec![*j; n - 1]),
            Coupling::PerBond(js) => spec.with_couplings(js.clone()),
        }
        .map_err(|e| core_diagnostic("chain.coupling", e))
    }

    pub fn build_protocol(&self) -> Result<(ChainSpec, DriveProtocol), Diagnostic> {
        let spec = self.build_chain()?;
        let p = self
            .protocol
            .as_ref()
            .ok_or_else(|| Diagnostic::new("protocol", "missing"))?;
        let durations = match p.stage_durations {
            Some(d) => d,
            None => stage_durations(spec.reference_coupling(), spec.lambda1, spec.lambda2)
                .map_err(|e| core_diagnostic("protocol.stage_durations", e))?,
        };
        let mut protocol = DriveProtocol::with_durations(p.omega, durations)
            .map_err(|e| core_diagnostic("protocol", e))?
            .with_commensuration(p.commensurate);
        if let Some(n) = p.n_cycles {
            protocol = protocol.with_cycles(n);
        }
        protocol.validate().map_err(|e| core_diagnostic("protocol", e))?;
        Ok((spec, protocol))
    }

    /// Stable digest of the configuration content (key order and
    /// whitespace in the source file do not matter).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = canonical_json(&value);
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// JSON text with object keys sorted at every level.
fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            let body: Vec<String> = entries
                .into_iter()
                .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), canonical_json(v)))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROUTE: &str = r#"{
        "kind": "route",
        "chain": {"n_sites": 13, "base_splitting": 1.0, "lambda1": 3.0, "lambda2": 1.5, "node_index": 7},
        "protocol": {"omega": 10.0}
    }"#;

    fn messages(text: &str) -> Vec<Diagnostic> {
        match parse_str(text) {
            Err(ConfigError::Invalid(d)) => d,
            other => panic!("expected diagnostics, got {other:?}"),
        }
    }

    #[test]
    fn minimal_route_parses() {
        let config = parse_str(ROUTE).unwrap();
        assert_eq!(config.kind, Kind::Route);
        let (spec, protocol) = config.build_protocol().unwrap();
        assert_eq!(spec.node_index, 7);
        assert_eq!(spec.couplings, vec![1.0; 12]);
        assert_eq!(protocol.omega, 10.0);
    }

    #[test]
    fn degenerate_ratchet_is_reported() {
        let d = messages(&ROUTE.replace("\"lambda2\": 1.5", "\"lambda2\": 3.0"));
        assert!(d.iter().any(|d| d.path == "chain.lambda2" && d.message.contains("degenerate ratchet")), "{d:?}");
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let d = messages(&ROUTE.replace("\"omega\": 10.0", "\"omega\": 10.0, \"omgea\": 1"));
        assert_eq!(d.len(), 1);
        assert!(d[0].path.starts_with("protocol"), "{d:?}");
        assert!(d[0].message.contains("omgea"));
        assert!(messages(&ROUTE.replacen('{', "{\"extra\": 0,", 1))[0].message.contains("extra"));
    }

    #[test]
    fn unit_mistakes_carry_paths() {
        let d = messages(&ROUTE.replace("\"omega\": 10.0", "\"omega\": 0.0, \"stage_durations\": [-1.0, 2.0]"));
        let paths: Vec<&str> = d.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"protocol.omega"), "{paths:?}");
        assert!(paths.contains(&"protocol.stage_durations[0]"), "{paths:?}");
        let d = messages(&ROUTE.replacen('{', "{\"offset\": {\"kind\": \"time\", \"value\": -0.5},", 1));
        assert_eq!(d[0].path, "offset.value");
    }

    #[test]
    fn kind_relevance() {
        let d = messages(r#"{"kind": "sweep", "omegas": [10.0], "chain": {"n_sites": 3, "base_splitting": 1, "lambda1": 3, "lambda2": 1.5}}"#);
        let paths: Vec<&str> = d.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"ratchet"));
        assert!(paths.contains(&"lengths"));
        assert!(paths.contains(&"chain"));
        assert!(parse_str(r#"{"kind": "optimize"}"#).is_ok());
    }

    #[test]
    fn dt_max_bound_uses_fastest_carrier() {
        let d = messages(&ROUTE.replacen('{', "{\"dt_max\": 0.05,", 1));
        assert_eq!(d[0].path, "dt_max");
        assert!(parse_str(&ROUTE.replacen('{', "{\"dt_max\": 0.01,", 1)).is_ok());
    }

    #[test]
    fn hash_ignores_layout_but_not_content() {
        let a = parse_str(ROUTE).unwrap();
        let reordered = r#"{"protocol": {"omega": 10.0}, "kind": "route",
            "chain": {"lambda2": 1.5, "lambda1": 3.0, "node_index": 7, "base_splitting": 1.0, "n_sites": 13}}"#;
        let b = parse_str(reordered).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = parse_str(&ROUTE.replace("10.0", "10.5")).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn per_bond_couplings() {
        let text = ROUTE.replace("\"n_sites\": 13", "\"n_sites\": 3, \"coupling\": [1.0, 0.9]").replace("\"node_index\": 7", "\"node_index\": 2");
        let spec = parse_str(&text).unwrap().build_chain().unwrap();
        assert_eq!(spec.couplings, vec![1.0, 0.9]);
        let d = messages(&text.replace("[1.0, 0.9]", "[1.0]"));
        assert_eq!(d[0].path, "chain.coupling");
    }
}
