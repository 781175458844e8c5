//! Command-line front end: TOML configuration, study dispatch and the JSON
//! result document.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{
    bounds_check, check_condition_strict, converge_in_r, decay_envelope, harnack_study, solve,
    sweep, AnalysisError, DecayLadders, HarnackConfig, Numerics, ParamPath,
    DEFAULT_CONDITION_MARGIN,
};
use crate::assembly::{
    assemble, AssemblyOptions, DriftScheme, FieldParams, ProblemParams, RoadParams,
};
use crate::coeffexpr::{CoefficientField, ParseError};
use crate::eigsolve::{
    dense_principal_eig, principal_eig, EigenResult, LinearSolver, Shift, SolverConfig,
};
use crate::evolve::{decay_rate, evolve, InitialCondition};
use crate::grid::{Component, Shape, TruncatedGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadSection {
    #[serde(rename = "D")]
    pub diffusion: f64,
    pub c: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub f_expr: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_bound: Option<f64>,
}

impl Default for RoadSection {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            c: 0.0,
            mu1: 1.0,
            mu2: 1.0,
            nu1: 1.0,
            nu2: 1.0,
            f_expr: "0".into(),
            f_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub d: f64,
    pub c: f64,
    pub a_expr: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_bound: Option<f64>,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            d: 1.0,
            c: 0.0,
            a_expr: "0".into(),
            a_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    #[serde(rename = "R")]
    pub radius: f64,
    pub h: f64,
    pub shape: Shape,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            radius: 10.0,
            h: 0.25,
            shape: Shape::Halfdisk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub shift: Shift,
    pub drift_scheme: DriftScheme,
    pub allow_peclet_violation: bool,
    pub linear_solver: LinearSolver,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            shift: s.shift,
            drift_scheme: DriftScheme::Auto,
            allow_peclet_violation: false,
            linear_solver: s.linear_solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub seed: u64,
    pub radii: Vec<f64>,
    pub sweep_path: String,
    pub sweep_values: Vec<f64>,
    pub harnack_draws: usize,
    pub harnack_r: f64,
    pub harnack_bound: f64,
    pub harnack_doubling: bool,
    pub harnack_refinement: bool,
    /// Defaults to `{R/8, R/4, R/2}` when empty.
    pub decay_rho: Vec<f64>,
    /// Defaults to `2^-k`, `k = 0..=10`, when empty.
    pub decay_beta: Vec<f64>,
    /// Defaults to `R/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_radius: Option<f64>,
    pub condition_margin: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            seed: 0,
            radii: vec![5.0, 10.0, 20.0, 40.0],
            sweep_path: "D".into(),
            sweep_values: vec![0.5, 1.0, 2.0, 4.0],
            harnack_draws: 20,
            harnack_r: 2.0,
            harnack_bound: 1.0,
            harnack_doubling: false,
            harnack_refinement: false,
            decay_rho: Vec::new(),
            decay_beta: Vec::new(),
            probe_radius: None,
            condition_margin: DEFAULT_CONDITION_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub dt: f64,
    pub steps: usize,
    pub burn_in: f64,
    pub initial: InitialCondition,
    pub snapshot_every: usize,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            steps: 2000,
            burn_in: 0.5,
            initial: InitialCondition::Ones,
            snapshot_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    /// JSON plus a CSV projection for sweeps and convergence studies.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// JSON destination; standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub road: RoadSection,
    pub field1: FieldSection,
    pub field2: FieldSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub study: StudySection,
    pub evolve: EvolveSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed configuration: {0}")]
    Syntax(String),
    #[error("{key}: {source}")]
    Expression {
        key: String,
        #[source]
        source: ParseError,
    },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("bad override {0:?}: expected key.path=value")]
    Override(String),
}

fn coefficient(key: &str, source: &str, bound: Option<f64>) -> Result<CoefficientField, ConfigError> {
    CoefficientField::parse(source, bound.unwrap_or(f64::INFINITY)).map_err(|e| ConfigError::Expression {
        key: key.into(),
        source: e,
    })
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn problem(&self) -> Result<ProblemParams, ConfigError> {
        let field = |key: &str, s: &FieldSection| -> Result<FieldParams, ConfigError> {
            Ok(FieldParams {
                diffusion: s.d,
                drift: s.c,
                growth: coefficient(&format!("{key}.a_expr"), &s.a_expr, s.a_bound)?,
            })
        };
        let r = &self.road;
        let params = ProblemParams {
            road: RoadParams {
                diffusion: r.diffusion,
                drift: r.c,
                to_field: [r.mu1, r.mu2],
                to_road: [r.nu1, r.nu2],
                potential: coefficient("road.f_expr", &r.f_expr, r.f_bound)?,
            },
            fields: [field("field1", &self.field1)?, field("field2", &self.field2)?],
        };
        params.validate().map_err(|e| {
            let key = match &e {
                crate::assembly::ParamError::NotPositive { key, .. }
                | crate::assembly::ParamError::NotFinite { key, .. } => key.to_string(),
                crate::assembly::ParamError::PotentialDependsOnY => "road.f_expr".into(),
            };
            ConfigError::Invalid {
                key,
                message: e.to_string(),
            }
        })?;
        Ok(params)
    }

    pub fn grid(&self) -> Result<TruncatedGrid, ConfigError> {
        TruncatedGrid::new(self.grid.radius, self.grid.h, self.grid.shape).map_err(|e| ConfigError::Invalid {
            key: "grid".into(),
            message: e.to_string(),
        })
    }

    pub fn numerics(&self) -> Numerics {
        let s = &self.solver;
        Numerics {
            assembly: AssemblyOptions {
                scheme: s.drift_scheme,
                allow_peclet_violation: s.allow_peclet_violation,
            },
            solver: SolverConfig {
                tol: s.tol,
                max_iter: s.max_iter,
                shift: s.shift,
                linear_solver: s.linear_solver,
                ..SolverConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.problem()?;
        self.grid()?;
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.into(),
            message,
        };
        self.numerics()
            .solver
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;
        for (key, bound) in [
            ("road.f_bound", self.road.f_bound),
            ("field1.a_bound", self.field1.a_bound),
            ("field2.a_bound", self.field2.a_bound),
        ] {
            if let Some(b) = bound.filter(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(invalid(key, format!("must be finite and non-negative, got {b}")));
            }
        }
        if self.evolve.dt <= 0.0 || !self.evolve.dt.is_finite() {
            return Err(invalid("evolve.dt", format!("must be positive, got {}", self.evolve.dt)));
        }
        if !(0.0..1.0).contains(&self.evolve.burn_in) {
            return Err(invalid("evolve.burn_in", "must lie in [0, 1)".into()));
        }
        if ParamPath::parse(&self.study.sweep_path).is_none() {
            return Err(invalid(
                "study.sweep_path",
                format!("unknown parameter {:?}", self.study.sweep_path),
            ));
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, raw: &str) -> Result<(), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(raw.into()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(raw.into()));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(raw.into()))?;
    }
    node.insert(last.to_string(), parsed);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Eig,
    Bounds,
    Converge,
    Sweep,
    Harnack,
    Decay,
    Evolve,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Bounds => "bounds",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
            Command::Harnack => "harnack",
            Command::Decay => "decay",
            Command::Evolve => "evolve",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "roadfield", version, about = "Principal eigenvalues of road-field systems")]
pub struct Args {
    pub command: Command,
    /// TOML configuration; built-in defaults when omitted.
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set grid.R=20
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Write the JSON document here instead of output.path or stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Dump the eigenvector (eig, oracle) as text with a JSON sidecar.
    #[arg(long, value_name = "PATH")]
    pub dump_vector: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    /// Name of the failing invariant check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub command: String,
    pub config_echo: Value,
    pub results: Value,
    pub timings_ms: Map<String, Value>,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl ResultDocument {
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            None => 0,
            Some(e) if e.kind == "invariant" => 2,
            Some(_) => 1,
        }
    }
}

/// Outcome of a command before it is wrapped into a document.
struct Outcome {
    results: Value,
    failed_check: Option<(String, String)>,
    csv_rows: Option<Vec<CsvRow>>,
    vector: Option<(TruncatedGrid, Vec<f64>)>,
}

impl Outcome {
    fn plain(results: Value) -> Self {
        Self {
            results,
            failed_check: None,
            csv_rows: None,
            vector: None,
        }
    }

    fn check(mut self, ok: bool, name: &str, message: impl FnOnce() -> String) -> Self {
        if !ok && self.failed_check.is_none() {
            self.failed_check = Some((name.into(), message()));
        }
        self
    }
}

/// One line of the CSV projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub index: usize,
    pub parameter_or_radius: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Everything a command produces besides side files.
#[derive(Debug, Clone)]
pub struct Execution {
    pub document: ResultDocument,
    /// Per-point rows for sweeps and convergence studies.
    pub csv_rows: Option<Vec<CsvRow>>,
    /// Eigenvector and its grid for `eig` and `oracle`.
    pub vector: Option<(TruncatedGrid, Vec<f64>)>,
}

fn error_info(kind: &str, message: String) -> ErrorInfo {
    ErrorInfo {
        kind: kind.into(),
        message,
        offset: None,
        key: None,
        check: None,
    }
}

fn config_error_info(e: &ConfigError) -> ErrorInfo {
    let mut info = error_info("config", e.to_string());
    match e {
        ConfigError::Expression { key, source } => {
            info.kind = "parse".into();
            info.offset = Some(source.offset());
            info.key = Some(key.clone());
        }
        ConfigError::Invalid { key, .. } => info.key = Some(key.clone()),
        ConfigError::Io { .. } => info.kind = "io".into(),
        _ => {}
    }
    info
}

struct Failure {
    info: ErrorInfo,
    partial: Option<Value>,
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        let kind = match e {
            AnalysisError::ConditionUnverified => "invariant",
            _ => "numerical",
        };
        let mut info = error_info(kind, e.to_string());
        if kind == "invariant" {
            info.check = Some("condition_strict".into());
        }
        Failure { info, partial: None }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            info: config_error_info(&e),
            partial: None,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure {
        info: error_info("numerical", e.to_string()),
        partial: None,
    }
}

fn eig_payload(e: &EigenResult) -> Value {
    json!({
        "lambda": e.lambda,
        "residual": e.residual,
        "iterations": e.iterations,
        "positivity_margin": e.positivity_margin,
        "N": e.vector.len(),
    })
}

fn run_command(cmd: Command, cfg: &RunConfig, timings: &mut Map<String, Value>) -> Result<Outcome, Failure> {
    let params = cfg.problem()?;
    let num = cfg.numerics();
    let started = Instant::now();
    let mut lap = |name: &str, t: Instant| {
        timings.insert(name.into(), json!(t.elapsed().as_secs_f64() * 1e3));
    };
    let out = match cmd {
        Command::Eig => {
            let grid = cfg.grid()?;
            let sys = assemble(&grid, &params, &num.assembly).map_err(numerical)?;
            let e = principal_eig(&sys, &num.solver).map_err(numerical)?;
            let floor = sys.matrix.gershgorin_floor(None);
            let lambda = e.lambda;
            let mut o = Outcome::plain(eig_payload(&e)).check(lambda >= floor - 1e-9, "gershgorin_floor", || {
                format!("lambda {lambda} below the Gershgorin floor {floor}")
            });
            o.vector = Some((grid, e.vector));
            o
        }
        Command::Oracle => {
            let grid = cfg.grid()?;
            let sys = assemble(&grid, &params, &num.assembly).map_err(numerical)?;
            let it = principal_eig(&sys, &num.solver).map_err(numerical)?;
            let dense = dense_principal_eig(&sys.matrix).map_err(numerical)?;
            let diff = (it.lambda - dense.lambda).abs();
            let gap = dense.spectral_gap_hint.unwrap_or(f64::INFINITY);
            let tol = 1e-8 * (1.0 + it.lambda.abs());
            let mut o = Outcome::plain(json!({
                "lambda_dense": dense.lambda,
                "lambda_iterative": it.lambda,
                "gap": dense.spectral_gap_hint,
            }))
            .check(diff <= tol, "oracle_equivalence", || {
                format!("iterative and dense eigenvalues differ by {diff:e}")
            })
            .check(gap > 0.0, "spectral_gap", || format!("non-positive gap {gap}"));
            o.vector = Some((grid, it.vector));
            o
        }
        Command::Bounds => {
            let grid = cfg.grid()?;
            let rep = bounds_check(&params, &grid, &num)?;
            let ok = rep.satisfied.lower;
            let (l, lower) = (rep.lambda, rep.lower);
            Outcome::plain(json!({
                "lower": rep.lower,
                "upper_road": rep.upper_road,
                "upper_dirichlet": rep.upper_dirichlet,
                "lambda": rep.lambda,
                "satisfied": {
                    "lower": rep.satisfied.lower,
                    "upper_road": rep.satisfied.upper_road,
                    "upper_dirichlet": rep.satisfied.upper_dirichlet,
                },
            }))
            .check(ok, "lower_bound", || format!("lambda {l} below the lower bound {lower}"))
        }
        Command::Converge => {
            let report = converge_in_r(&params, &cfg.study.radii, cfg.grid.h, cfg.grid.shape, &num);
            let (rep, err) = match report {
                Ok(r) => (r, None),
                Err(f) => (f.partial.clone(), Some(f)),
            };
            let mut results = json!({
                "radii": rep.radii,
                "lambdas": rep.lambdas,
                "monotone_violation": rep.monotone_violation,
            });
            if let Some(l) = rep.extrapolated_limit {
                results["extrapolated_limit"] = json!(l);
            }
            if let Some(p) = rep.fit_exponent {
                results["fit_exponent"] = json!(p);
            }
            if let Some(f) = err {
                return Err(Failure {
                    info: error_info("numerical", f.to_string()),
                    partial: Some(results),
                });
            }
            let rows = rep
                .radii
                .iter()
                .enumerate()
                .map(|(k, r)| CsvRow {
                    index: k,
                    parameter_or_radius: *r,
                    lambda: rep.lambdas[k],
                    residual: rep.residuals[k],
                    iterations: rep.iterations[k],
                })
                .collect();
            let (v, t) = (rep.monotone_violation, rep.monotone_tolerance);
            let mut o = Outcome::plain(results).check(rep.monotone_ok, "monotone_in_R", || {
                format!("lambda increased by {v:e} (tolerance {t:e})")
            });
            o.csv_rows = Some(rows);
            o
        }
        Command::Sweep => {
            let grid = cfg.grid()?;
            let path = ParamPath::parse(&cfg.study.sweep_path).expect("validated at load");
            let rep = sweep(&params, path, &cfg.study.sweep_values, &grid, &num)?;
            let mut results = json!({
                "path": path.name(),
                "values": rep.values,
                "lambdas": rep.lambdas,
                "max_difference_quotient": rep.max_difference_quotient,
            });
            if let Some(ok) = rep.monotone_ok {
                results["monotone_ok"] = json!(ok);
            }
            let rows = rep
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| CsvRow {
                    index: k,
                    parameter_or_radius: *v,
                    lambda: rep.lambdas[k],
                    residual: rep.residuals[k],
                    iterations: rep.iterations[k],
                })
                .collect();
            let mut o = Outcome::plain(results).check(rep.monotone_ok != Some(false), "monotonicity", || {
                format!("lambda is not monotone along {}", path.name())
            });
            o.csv_rows = Some(rows);
            o
        }
        Command::Harnack => {
            let hc = HarnackConfig {
                seed: cfg.study.seed,
                n_draws: cfg.study.harnack_draws,
                radius: cfg.grid.radius,
                inner_radius: cfg.study.harnack_r,
                spacing: cfg.grid.h,
                shape: cfg.grid.shape,
                bound: cfg.study.harnack_bound,
                doubling: cfg.study.harnack_doubling,
                refinement: cfg.study.harnack_refinement,
            };
            let rep = harnack_study(&params, &hc, &num).map_err(numerical)?;
            let mut results = json!({
                "r": rep.r,
                "R": rep.big_r,
                "n_draws": rep.n_draws,
                "ratios": rep.ratios,
                "max_ratio": rep.max_ratio,
            });
            if let Some(d) = rep.refinement_drift {
                results["refinement_drift"] = json!(d);
            }
            let ok = rep.ratios.iter().all(|r| r.is_finite() && *r >= 1.0);
            Outcome::plain(results).check(ok, "harnack_ratio", || "a ratio is infinite or below 1".into())
        }
        Command::Decay => {
            let grid = cfg.grid()?;
            let eig = solve(&grid, &params, &num)?;
            let probe = cfg.study.probe_radius.unwrap_or(grid.radius() / 2.0);
            let cond = check_condition_strict(&params, &grid, probe, eig.lambda, cfg.study.condition_margin)?;
            let mut ladders = DecayLadders::for_radius(grid.radius());
            if !cfg.study.decay_rho.is_empty() {
                ladders.rho = cfg.study.decay_rho.clone();
            }
            if !cfg.study.decay_beta.is_empty() {
                ladders.beta = cfg.study.decay_beta.clone();
            }
            let rep = decay_envelope(&params, &grid, &eig, &cond, &ladders, &num)?;
            let results = match &rep.envelope {
                Some(env) => {
                    let mut r = json!({
                        "rho": env.rho,
                        "alpha": env.alpha,
                        "beta": env.beta,
                        "gamma1": env.gamma[0],
                        "gamma2": env.gamma[1],
                        "prefactor": env.prefactor,
                        "feasible": true,
                        "max_violation": rep.max_violation,
                    });
                    if let Some((x, y)) = rep.worst_node {
                        r["worst_node"] = json!([x, y]);
                    }
                    r
                }
                None => json!({ "feasible": false, "max_violation": 0.0 }),
            };
            let (n, worst) = (rep.violations, rep.worst_node);
            Outcome::plain(results).check(rep.violations == 0, "envelope_domination", || {
                format!("{n} nodes exceed the envelope, worst at {worst:?}")
            })
        }
        Command::Evolve => {
            let grid = cfg.grid()?;
            let sys = assemble(&grid, &params, &num.assembly).map_err(numerical)?;
            let eig = principal_eig(&sys, &num.solver).map_err(numerical)?;
            let ev = &cfg.evolve;
            let initial = match ev.initial {
                InitialCondition::Ones => vec![1.0; grid.len()],
                InitialCondition::Eigenvector => eig.vector.clone(),
                InitialCondition::Bump => {
                    let mut x = vec![0.0; grid.len()];
                    let k = grid.road_local_at(0).expect("origin lies on the road");
                    x[k] = 1.0;
                    x
                }
            };
            let traj = evolve(&sys, &initial, ev.dt, ev.steps, ev.snapshot_every).map_err(numerical)?;
            let rate = decay_rate(&traj, ev.burn_in).map_err(numerical)?;
            let relative_error = (rate - eig.lambda).abs() / eig.lambda.abs().max(1e-300);
            let positive = traj.state_final.iter().all(|v| *v >= 0.0);
            Outcome::plain(json!({
                "rate": rate,
                "lambda_ref": eig.lambda,
                "relative_error": relative_error,
            }))
            .check(positive, "positivity", || "trajectory lost non-negativity".into())
        }
    };
    lap("total", started);
    Ok(out)
}

/// Runs one command on a loaded configuration.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Execution {
    let mut timings = Map::new();
    let mut doc = ResultDocument {
        schema_version: SCHEMA_VERSION,
        command: cmd.name().into(),
        config_echo: serde_json::to_value(cfg).expect("config serializes"),
        results: Value::Object(Map::new()),
        timings_ms: Map::new(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        error: None,
    };
    let mut csv = None;
    let mut vector = None;
    match run_command(cmd, cfg, &mut timings) {
        Ok(out) => {
            doc.results = out.results;
            if let Some((check, message)) = out.failed_check {
                let mut info = error_info("invariant", message);
                info.check = Some(check);
                doc.error = Some(info);
            }
            csv = out.csv_rows;
            vector = out.vector;
        }
        Err(f) => {
            if let Some(p) = f.partial {
                doc.results = p;
            }
            doc.error = Some(f.info);
        }
    }
    doc.timings_ms = timings;
    if !finite_numbers(&doc.results) {
        doc.error.get_or_insert_with(|| {
            let mut info = error_info("invariant", "non-finite number in results".into());
            info.check = Some("finite_results".into());
            info
        });
    }
    Execution {
        document: doc,
        csv_rows: csv,
        vector,
    }
}

fn finite_numbers(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_none_or(f64::is_finite),
        Value::Null => false,
        Value::Array(a) => a.iter().all(finite_numbers),
        Value::Object(o) => o.values().all(finite_numbers),
        _ => true,
    }
}

fn write_csv(path: &Path, rows: &[CsvRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Writes the vector one entry per line plus `<path>.json` describing the
/// grid and the node ordering.
pub fn dump_vector(path: &Path, grid: &TruncatedGrid, x: &[f64]) -> std::io::Result<()> {
    let mut text = String::with_capacity(x.len() * 24);
    for v in x {
        text.push_str(&format!("{v:e}\n"));
    }
    std::fs::write(path, text)?;
    let mut xs = Vec::with_capacity(x.len());
    let mut ys = Vec::with_capacity(x.len());
    let mut comps = Vec::with_capacity(x.len());
    for g in 0..grid.len() {
        let (c, px, py) = grid.coordinates(g).expect("index in range");
        xs.push(px);
        ys.push(py);
        comps.push(match c {
            Component::Road => 0,
            Component::Field(s) => 1 + s.index(),
        });
    }
    let sidecar = json!({
        "R": grid.radius(),
        "h": grid.spacing(),
        "shape": grid.shape(),
        "N": grid.len(),
        "road_len": grid.road_len(),
        "field_len": grid.field_len(),
        "ordering": "road left to right, then field 1 row by row from y = h upward (x increasing within a row), then field 2 in the same order",
        "component": comps,
        "x": xs,
        "y": ys,
    });
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    std::fs::write(PathBuf::from(side), serde_json::to_string_pretty(&sidecar)?)
}

fn emit(doc: &ResultDocument, path: Option<&Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("document serializes") + "\n";
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(args: Args) -> i32 {
    let cfg = match RunConfig::load(args.config.as_deref(), &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            let doc = ResultDocument {
                schema_version: SCHEMA_VERSION,
                command: args.command.name().into(),
                config_echo: Value::Null,
                results: Value::Object(Map::new()),
                timings_ms: Map::new(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                error: Some(config_error_info(&e)),
            };
            eprintln!("error: {e}");
            let _ = emit(&doc, args.output.as_deref());
            return 1;
        }
    };
    let Execution {
        document: mut doc,
        csv_rows,
        vector,
    } = execute(args.command, &cfg);
    let json_path = args.output.clone().or_else(|| cfg.output.path.clone());
    let mut io_error = None;
    if cfg.output.format == OutputFormat::Csv {
        if let Some(rows) = &csv_rows {
            let csv_path = json_path
                .as_ref()
                .map(|p| p.with_extension("csv"))
                .unwrap_or_else(|| PathBuf::from(format!("{}.csv", args.command.name())));
            if let Err(e) = write_csv(&csv_path, rows) {
                io_error = Some(format!("cannot write {}: {e}", csv_path.display()));
            }
        }
    }
    if let (Some(path), Some((grid, x))) = (&args.dump_vector, &vector) {
        if let Err(e) = dump_vector(path, grid, x) {
            io_error = Some(format!("cannot write {}: {e}", path.display()));
        }
    }
    if let Some(message) = io_error {
        doc.error.get_or_insert(error_info("io", message));
    }
    if let Some(e) = &doc.error {
        eprintln!("error ({}): {}", e.kind, e.message);
    }
    if let Err(e) = emit(&doc, json_path.as_deref()) {
        eprintln!("error: cannot write the result document: {e}");
        return 1;
    }
    doc.exit_code()
}

pub fn main_entry() -> i32 {
    run(Args::parse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_echo() {
        let cfg = RunConfig::from_toml("", &[]).unwrap();
        let echo = serde_json::to_value(&cfg).unwrap();
        let back: RunConfig = serde_json::from_value(echo).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_after_parse() {
        let text = "[grid]\nR = 4\nh = 0.5\n[field1]\na_expr = \"0.5\"\n";
        let cfg = RunConfig::from_toml(
            text,
            &[
                "grid.R=6".into(),
                "field2.a_expr=x*y".into(),
                "study.radii=[2, 4]".into(),
                "grid.shape=rectangle".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.radius, 6.0);
        assert_eq!(cfg.field1.a_expr, "0.5");
        assert_eq!(cfg.field2.a_expr, "x*y");
        assert_eq!(cfg.study.radii, vec![2.0, 4.0]);
        assert_eq!(cfg.grid.shape, Shape::Rectangle);
        assert!(matches!(
            RunConfig::from_toml("", &["nokey".into()]),
            Err(ConfigError::Override(_))
        ));
    }

    #[test]
    fn validation_reports_key_paths() {
        match RunConfig::from_toml("[road]\nnu2 = -1\n", &[]) {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "road.nu2"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_toml("[field1]\na_expr = \"1 + * x\"\n", &[]) {
            Err(ConfigError::Expression { key, source }) => {
                assert_eq!(key, "field1.a_expr");
                assert_eq!(source.offset(), 4);
            }
            other => panic!("{other:?}"),
        }
        match RunConfig::from_toml("[field2]\na_bound = -1\n", &[]) {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "field2.a_bound"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::from_toml("[grid]\nradius = 3\n", &[]),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn eig_document_has_expected_keys() {
        let cfg = RunConfig::from_toml("[grid]\nR = 2\nh = 0.5\n", &[]).unwrap();
        let run = execute(Command::Eig, &cfg);
        let doc = run.document;
        assert_eq!(doc.exit_code(), 0);
        let keys: Vec<&str> = doc.results.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(sorted, ["N", "iterations", "lambda", "positivity_margin", "residual"]);
        assert!(run.vector.is_some());
    }

    #[test]
    fn condition_refusal_is_an_invariant_failure() {
        let cfg = RunConfig::from_toml(
            "[grid]\nR = 4\nh = 0.5\n[field1]\na_expr = \"0.5\"\n[field2]\na_expr = \"0.5\"\n",
            &[],
        )
        .unwrap();
        let doc = execute(Command::Decay, &cfg).document;
        assert_eq!(doc.exit_code(), 2);
        assert_eq!(doc.error.unwrap().check.as_deref(), Some("condition_strict"));
    }
}
