//! Command-line front end: JSON run configs in, self-describing reports out.

mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::{self, Convention, DEFAULT_CAP};
use crate::freelimit::{self, EquilibriumMeasure, FreeReport};
use crate::geometry::{self, ConnectionEstimate, DualCoords, MetricEstimate, SweepTable, DEFAULT_ALPHAS};
use crate::inference::{self, CRReport, Estimator, FluctuationReport, FreeCRTable, LoopResidual};
use crate::mcmc::{self, Estimate, SamplerConfig, ThermoOptions};
use crate::model::{compose_independent, ModelSpec, Theta};
use crate::poly::{Polynomial, DEFAULT_GRID_NODES};

pub use render::{format_sig, CSV_HELP};

/// Relative part of the agreement band used by `method = both`.
pub const AGREEMENT_REL: f64 = 0.05;
/// Standard-error part of the agreement band.
pub const AGREEMENT_K: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Pressure,
    Metric,
    Connections,
    Legendre,
    Entropy,
    Equilibrium,
    FreeReport,
    CramerRao,
    Fluctuations,
    LoopCheck,
    ConvergenceSweep,
    Compose,
}

impl Command {
    fn needs_theta(self) -> bool {
        !matches!(self, Command::Equilibrium | Command::FreeReport | Command::Fluctuations)
    }

    /// Commands that always sample.
    fn always_samples(self) -> bool {
        matches!(self, Command::CramerRao | Command::Fluctuations | Command::LoopCheck)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Exact,
    Mcmc,
    Both,
}

impl MethodChoice {
    fn exact(self) -> bool {
        self != MethodChoice::Mcmc
    }

    fn mcmc(self) -> bool {
        self != MethodChoice::Exact
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_convention() -> Convention {
    Convention::Matrix
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHAS.to_vec()
}

fn default_grid_nodes() -> usize {
    DEFAULT_GRID_NODES
}

/// A complete run description. Models may be given inline or as paths to
/// JSON model files; paths are resolved before parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Components for `compose`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub thermo: ThermoOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_convention")]
    pub convention: Convention,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Matrix sizes for sweeps, fluctuations and the free Cramér–Rao table.
    #[serde(default)]
    pub ns: Vec<usize>,
    /// Independent observations for `cramer-rao`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub estimator: Option<Estimator>,
    /// Test function for `loop-check`.
    #[serde(default)]
    pub phi: Option<Polynomial>,
    /// Statistics for `fluctuations`.
    #[serde(default)]
    pub fs: Option<Vec<Polynomial>>,
    /// Radius of the free pressure.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_grid_nodes")]
    pub grid_nodes: usize,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

/// Parses a scalar override: JSON when it parses, a string otherwise.
fn parse_scalar(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Sets `root[a][b]… = value` for a dotted path, creating objects as needed.
pub fn apply_override(root: &mut Value, dotted: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(dotted, "empty path segment"));
    }
    for (i, part) in parts.iter().enumerate() {
        let path = parts[..=i].join(".");
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Map::new());
                cur.as_object_mut().expect("just set")
            }
            _ => return Err(Error::config(path, "cannot set a field inside a non-object value")),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

fn resolve_model_refs(root: &mut Value, base: &Path) -> Result<()> {
    let load = |v: &mut Value| -> Result<()> {
        if let Value::String(p) = v {
            let path = base.join(&*p);
            *v = read_json(&path)?;
        }
        Ok(())
    };
    if let Some(m) = root.get_mut("model") {
        load(m)?;
    }
    if let Some(Value::Array(ms)) = root.get_mut("models") {
        for m in ms {
            load(m)?;
        }
    }
    Ok(())
}

/// Raw inputs gathered from the command line.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub command: Option<Command>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub method: Option<MethodChoice>,
    pub output: Option<Format>,
    pub out: Option<PathBuf>,
    /// `(dotted.path, raw value)`
    pub overrides: Vec<(String, String)>,
}

/// Parses a config document (plus command-line overrides) and checks it.
pub fn validate_config(inv: &Invocation) -> Result<RunConfig> {
    let (mut root, base) = match &inv.config {
        Some(path) => (
            read_json(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (Value::Object(Map::new()), PathBuf::new()),
    };
    if !root.is_object() {
        return Err(Error::config("<root>", "config must be a JSON object"));
    }
    for (k, v) in &inv.overrides {
        apply_override(&mut root, k, parse_scalar(v))?;
    }
    if let Some(c) = inv.command {
        apply_override(&mut root, "command", serde_json::to_value(c)?)?;
    }
    if let Some(s) = inv.seed {
        apply_override(&mut root, "seed", json!(s))?;
    }
    if let Some(m) = inv.method {
        apply_override(&mut root, "method", serde_json::to_value(m)?)?;
    }
    if let Some(f) = inv.output {
        apply_override(&mut root, "output.format", serde_json::to_value(f)?)?;
    }
    if let Some(p) = &inv.out {
        apply_override(&mut root, "output.path", json!(p))?;
    }
    resolve_model_refs(&mut root, &base)?;
    // A seed inside the sampler block counts as given.
    if root.get("seed").is_none_or(Value::is_null) {
        if let Some(s) = root.pointer("/sampler/seed").cloned() {
            apply_override(&mut root, "seed", s)?;
        }
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    cfg.materialize()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)?;
        let cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.materialize()
    }

    fn spec(&self) -> Result<&ModelSpec> {
        self.model.as_ref().ok_or_else(|| Error::config("model", "required for this command"))
    }

    fn theta(&self) -> Theta {
        Theta::new(self.theta.clone().unwrap_or_default())
    }

    fn uses_mcmc(&self) -> bool {
        let cap = self.model.as_ref().map_or(usize::MAX, |m| m.n.max(self.ns.iter().copied().max().unwrap_or(0)));
        match self.command {
            c if c.always_samples() => true,
            Command::Equilibrium => false,
            Command::FreeReport => !self.ns.is_empty(),
            Command::ConvergenceSweep => self.method.mcmc() || cap > DEFAULT_CAP,
            _ => self.method.mcmc(),
        }
    }

    /// Checks command-specific requirements and writes out every default.
    fn materialize(mut self) -> Result<Self> {
        if self.command == Command::Compose {
            if self.models.is_empty() {
                return Err(Error::config("models", "compose needs at least one component model"));
            }
            for (i, m) in self.models.iter().enumerate() {
                m.validate().map_err(|e| Error::config(format!("models[{i}]"), e.to_string()))?;
            }
            let product = compose_independent(&self.models)?;
            let theta = self
                .theta
                .clone()
                .ok_or_else(|| Error::config("theta", "required for this command"))?;
            product.split_theta(&Theta::new(theta))?;
        } else {
            let spec = self.spec()?.clone();
            spec.validate()?;
            if self.theta.is_none() {
                if self.command.needs_theta() && spec.dim() > 0 {
                    return Err(Error::config("theta", "required for this command"));
                }
                self.theta = Some(vec![0.0; spec.dim()]);
            }
            spec.check_theta(&self.theta())?;
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(-1.0..=1.0).contains(&a) {
                return Err(Error::config(format!("alphas[{i}]"), "must lie in [-1, 1]"));
            }
        }
        match self.command {
            Command::Fluctuations if self.ns.is_empty() => self.ns = vec![self.spec()?.n],
            Command::ConvergenceSweep if self.ns.len() < 2 => {
                return Err(Error::config("ns", "convergence-sweep needs at least two matrix sizes"))
            }
            _ => {}
        }
        if self.ns.contains(&0) {
            return Err(Error::config("ns", "matrix sizes must be positive"));
        }
        if self.command == Command::CramerRao {
            let spec = self.spec()?.clone();
            let est = match (&self.estimator, self.k) {
                (Some(e), Some(k)) if e.k != k => {
                    return Err(Error::config("k", format!("conflicts with estimator.k = {}", e.k)))
                }
                (Some(e), _) => e.clone(),
                (None, k) => Estimator::efficient(&spec, k.unwrap_or(1)),
            };
            if est.k == 0 {
                return Err(Error::config("k", "must be at least 1"));
            }
            self.k = Some(est.k);
            self.estimator = Some(est);
        }
        if self.command == Command::LoopCheck && self.phi.is_none() {
            self.phi = Some(Polynomial::monomial(1, 1.0));
        }
        if self.command == Command::Fluctuations && self.fs.is_none() {
            let spec = self.spec()?;
            self.fs = Some(if spec.perturbations.is_empty() {
                vec![Polynomial::monomial(1, 1.0)]
            } else {
                spec.perturbations.clone()
            });
        }
        if self.command == Command::FreeReport && self.radius.is_none() {
            self.radius = Some(10.0);
        }
        if self.grid_nodes < 8 {
            return Err(Error::config("grid_nodes", "must be at least 8"));
        }
        if self.thermo.nodes == 0 {
            return Err(Error::config("thermo.nodes", "must be at least 1"));
        }
        if self.uses_mcmc() {
            let seed = self
                .seed
                .ok_or_else(|| Error::config("seed", "required when the computation samples (pass --seed)"))?;
            self.sampler.seed = seed;
            self.sampler.validate()?;
            self.sampler = self.sampler.materialized();
        } else {
            self.sampler = self.sampler.materialized();
        }
        Ok(self)
    }
}

/// An exact value next to a Monte-Carlo one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Side<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<T>,
    /// Entrywise agreement within `max(5%, 3 stderr)`, when both are present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agree: Option<bool>,
}

fn agrees(exact: f64, mc: f64, stderr: f64) -> bool {
    (exact - mc).abs() <= (AGREEMENT_REL * exact.abs()).max(AGREEMENT_K * stderr).max(1e-10)
}

fn agree_all<'a>(pairs: impl Iterator<Item = (f64, f64, f64)> + 'a) -> bool {
    pairs.into_iter().all(|(e, m, s)| agrees(e, m, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub convention: Convention,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agree: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub pressure: Estimate,
    pub eta: DualCoords,
    pub value: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub a: f64,
    pub b: f64,
    pub h: Polynomial,
    pub potential: Polynomial,
    pub convex: bool,
    pub mass: f64,
    pub biane_residual: f64,
    #[serde(skip)]
    pub grid: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeReportResult {
    #[serde(flatten)]
    pub report: FreeReport,
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_cramer_rao: Option<FreeCRTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub phi: Polynomial,
    #[serde(flatten)]
    pub residual: LoopResidual,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeResult {
    pub dim: usize,
    pub offsets: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pressure: Option<f64>,
    pub metric: Side<MetricEstimate>,
}

/// Typed result of one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Pressure(Vec<PressureRow>),
    Metric(Side<MetricEstimate>),
    Connections(Side<Vec<ConnectionEstimate>>),
    Scalar(Side<ScalarSummary>),
    Equilibrium(EquilibriumResult),
    FreeReport(Box<FreeReportResult>),
    CramerRao(Box<CRReport>),
    Fluctuations(FluctuationReport),
    Loop(LoopResult),
    Sweep(SweepTable),
    Compose(ComposeResult),
}

#[derive(Debug, Clone, Serialize)]
pub struct Body<'a> {
    pub config: &'a RunConfig,
    pub result: &'a Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub generated_at: String,
    pub version: &'static str,
    pub content_hash: String,
}

/// Serialized body and its SHA-256.
pub fn body_bytes(config: &RunConfig, result: &Outcome) -> Result<(Vec<u8>, String)> {
    let bytes = serde_json::to_vec(&Body { config, result })?;
    let hash = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, hash))
}

fn metric_side(exact: Option<MetricEstimate>, mc: Option<MetricEstimate>) -> Side<MetricEstimate> {
    let agree = match (&exact, &mc) {
        (Some(e), Some(m)) => Some(agree_all(
            e.value
                .iter()
                .flatten()
                .zip(m.value.iter().flatten().zip(m.stderr.iter().flatten()))
                .map(|(e, (m, s))| (*e, *m, *s)),
        )),
        _ => None,
    };
    Side { exact, mcmc: mc, agree }
}

/// Runs a validated config.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let theta = cfg.theta();
    match cfg.command {
        Command::Pressure => {
            let spec = cfg.spec()?;
            let mc = if cfg.method.mcmc() {
                Some(mcmc::pressure_mcmc(spec, &theta, &cfg.sampler, &cfg.thermo)?)
            } else {
                None
            };
            let n2 = (spec.n * spec.n) as f64;
            Convention::ALL
                .iter()
                .map(|&conv| {
                    let exact = if cfg.method.exact() {
                        Some(exact::pressure_exact(spec, &theta, conv)?)
                    } else {
                        None
                    };
                    let mcmc = mc.map(|e| Estimate {
                        value: e.value + exact::log_volume_constant(spec.n, conv) / n2,
                        ..e
                    });
                    let agree = match (exact, mcmc) {
                        (Some(x), Some(m)) => Some(agrees(x, m.value, m.stderr)),
                        _ => None,
                    };
                    Ok(PressureRow { convention: conv, exact, mcmc, agree })
                })
                .collect::<Result<_>>()
                .map(Outcome::Pressure)
        }
        Command::Metric => {
            let spec = cfg.spec()?;
            let exact = cfg.method.exact().then(|| geometry::fisher_metric_exact(spec, &theta)).transpose()?;
            let mc = if cfg.method.mcmc() {
                let batch = mcmc::sample(spec, &theta, &cfg.sampler)?;
                Some(geometry::fisher_metric_mcmc(&batch)?)
            } else {
                None
            };
            Ok(Outcome::Metric(metric_side(exact, mc)))
        }
        Command::Connections => {
            let spec = cfg.spec()?;
            let exact = if cfg.method.exact() {
                Some(
                    cfg.alphas
                        .iter()
                        .map(|&a| geometry::alpha_connection_exact(spec, &theta, a))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let mc = if cfg.method.mcmc() {
                let batch = mcmc::sample(spec, &theta, &cfg.sampler)?;
                Some(
                    cfg.alphas
                        .iter()
                        .map(|&a| geometry::alpha_connection_mcmc(&batch, a))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let agree = match (&exact, &mc) {
                (Some(e), Some(m)) => Some(e.iter().zip(m).all(|(e, m)| {
                    agree_all(
                        e.value
                            .iter()
                            .zip(m.value.iter().zip(m.stderr.iter()))
                            .map(|(e, (m, s))| (e, m, s)),
                    )
                })),
                _ => None,
            };
            Ok(Outcome::Connections(Side { exact, mcmc: mc, agree }))
        }
        Command::Legendre | Command::Entropy => {
            let spec = cfg.spec()?;
            let pick = |r: geometry::GeometryReport| ScalarSummary {
                value: if cfg.command == Command::Legendre { r.legendre } else { r.entropy },
                pressure: r.pressure,
                eta: r.eta,
            };
            let exact = if cfg.method.exact() {
                Some(pick(geometry::geometry_exact(spec, &theta, cfg.convention, &[])?))
            } else {
                None
            };
            let mc = if cfg.method.mcmc() {
                Some(pick(geometry::geometry_mcmc(spec, &theta, cfg.convention, &[], &cfg.sampler, &cfg.thermo)?))
            } else {
                None
            };
            let agree = match (&exact, &mc) {
                (Some(e), Some(m)) => Some(agrees(e.value.value, m.value.value, m.value.stderr)),
                _ => None,
            };
            Ok(Outcome::Scalar(Side { exact, mcmc: mc, agree }))
        }
        Command::Equilibrium => {
            let spec = cfg.spec()?;
            let p = spec.potential_at(&theta)?;
            let q: EquilibriumMeasure = freelimit::solve_one_cut(&p)?;
            let grid = q.grid(cfg.grid_nodes)?;
            Ok(Outcome::Equilibrium(EquilibriumResult {
                a: q.a,
                b: q.b,
                biane_residual: freelimit::biane_residual(&q, &p)?,
                mass: grid.mass(),
                convex: p.is_convex(),
                grid: Some((grid.nodes().to_vec(), grid.values().to_vec())),
                potential: p,
                h: q.h,
            }))
        }
        Command::FreeReport => {
            let spec = cfg.spec()?;
            let radius = cfg.radius.unwrap_or(10.0);
            let report = freelimit::free_report(spec, &theta)?;
            if report.measure.a < -radius || report.measure.b > radius {
                return Err(Error::SupportEscapes { a: report.measure.a, b: report.measure.b, radius });
            }
            let free_cramer_rao = if cfg.ns.is_empty() {
                None
            } else {
                Some(inference::free_cramer_rao_check(spec, &cfg.ns, &cfg.sampler)?)
            };
            Ok(Outcome::FreeReport(Box::new(FreeReportResult { report, radius, free_cramer_rao })))
        }
        Command::CramerRao => {
            let spec = cfg.spec()?;
            let est = cfg.estimator.as_ref().expect("materialized");
            Ok(Outcome::CramerRao(Box::new(inference::cramer_rao_check(est, spec, &theta, &cfg.sampler)?)))
        }
        Command::Fluctuations => {
            let spec = cfg.spec()?;
            let fs = cfg.fs.as_ref().expect("materialized");
            Ok(Outcome::Fluctuations(inference::fluctuation_covariance(spec, fs, &cfg.ns, &cfg.sampler)?))
        }
        Command::LoopCheck => {
            let spec = cfg.spec()?;
            let phi = cfg.phi.clone().expect("materialized");
            let batch = mcmc::sample(spec, &theta, &cfg.sampler)?;
            let residual = inference::johansson_residual(spec, &theta, &phi, &batch)?;
            let within_band = residual.residual.within(0.0, inference::DECISION_BAND);
            Ok(Outcome::Loop(LoopResult { phi, residual, within_band }))
        }
        Command::ConvergenceSweep => {
            let spec = cfg.spec()?;
            Ok(Outcome::Sweep(geometry::convergence_sweep(spec, &theta, &cfg.ns, &cfg.sampler)?))
        }
        Command::Compose => {
            let product = compose_independent(&cfg.models)?;
            let exact_metric = if cfg.method.exact() {
                Some(MetricEstimate {
                    value: crate::tensor::to_rows(&geometry::product_metric_exact(&product, &theta)?),
                    stderr: vec![vec![0.0; product.dim()]; product.dim()],
                    warnings: vec![],
                })
            } else {
                None
            };
            let pressure = if cfg.method.exact() {
                Some(geometry::product_pressure_exact(&product, &theta, cfg.convention)?)
            } else {
                None
            };
            let mc = if cfg.method.mcmc() {
                let batches = geometry::sample_product(&product, &theta, &cfg.sampler)?;
                Some(geometry::product_metric_mcmc(&batches)?)
            } else {
                None
            };
            Ok(Outcome::Compose(ComposeResult {
                dim: product.dim(),
                offsets: product.offsets(),
                pressure,
                metric: metric_side(exact_metric, mc),
            }))
        }
    }
}

/// Renders a finished run in the requested format.
pub fn render(cfg: &RunConfig, outcome: &Outcome) -> Result<String> {
    match cfg.output.format {
        Format::Json => {
            let (bytes, hash) = body_bytes(cfg, outcome)?;
            let header = Header {
                generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                version: env!("CARGO_PKG_VERSION"),
                content_hash: hash,
            };
            let body: Value = serde_json::from_slice(&bytes)?;
            let mut doc = BTreeMap::new();
            doc.insert("body", body);
            doc.insert("header", serde_json::to_value(header)?);
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        Format::Table => render::table(cfg, outcome),
        Format::Csv => render::csv(cfg, outcome),
    }
}

/// Validates, runs and writes the report; returns the process exit status.
pub fn execute(inv: &Invocation) -> i32 {
    let result = validate_config(inv).and_then(|cfg| {
        let outcome = run(&cfg)?;
        let text = render(&cfg, &outcome)?;
        match &cfg.output.path {
            Some(p) => std::fs::write(p, text)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))?,
            None => print!("{text}"),
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Flags handled by the argument parser rather than as config overrides.
const KNOWN_FLAGS: [&str; 7] = ["config", "seed", "method", "output", "out", "help", "version"];

/// Splits config overrides (`--a.b=v`, `--a.b v`, `--theta=[0,1]`) out of an
/// argument list.
pub fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if KNOWN_FLAGS.contains(&key.as_str()) || key.is_empty() {
            rest.push(arg);
            continue;
        }
        match inline.or_else(|| it.next()) {
            Some(v) => overrides.push((key, v)),
            None => overrides.push((key, String::new())),
        }
    }
    (rest, overrides)
}
