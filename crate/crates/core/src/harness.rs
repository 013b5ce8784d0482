//! Experiment configuration, execution and report emission.
//!
//! A run is described by a flat `key=value` config (see [`CONFIG_KEYS`]),
//! resolved into an [`ExperimentSpec`], executed by [`run_experiment`] and
//! written out by [`emit_report`]. Reports are a long-format CSV (one row per
//! `(W, metric)`) and a JSON manifest that records everything needed to
//! reproduce the numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::Error;
use crate::estimators::{
    correlation, cross_interval_corr, delta_action_error, empirical_char_functional, empirical_cov,
    gaussian_bump, gaussianity_report, intensity_check, run_replications, variance_ratio_report,
    with_workers, Metric, ReplicationSet, ReportMeta, Rule, StatReport, Transform, Verdict,
    Z_THRESHOLD,
};
use crate::kernels::{
    bilinear_form, intensity_constant, polynomial_intensity, power_cov_rho, squared_kernel_mass,
    wick_cov_oracle, CovarianceKernel, MAX_HERMITE_ORDER, MAX_WICK_ORDER,
};
use crate::synth::{ProcessConfig, SampleGrid, SynthMethod};
use crate::transform::{make_trig_basis, PolySpec, TestFunction};

/// Fixed CSV header.
pub const CSV_HEADER: &str = "experiment,W,n,M,metric,estimate,stderr,z,threshold,verdict";

/// Every key accepted in a config file or as a flag.
pub const CONFIG_KEYS: [&str; 16] = [
    "experiment",
    "W",
    "n",
    "M",
    "T",
    "N",
    "seed",
    "workers",
    "oversample",
    "pad_taps",
    "method",
    "out",
    "format",
    "basis",
    "test_function",
    "coeffs",
];

/// Half-width of the integration window in the unit-mass check.
pub const UNIT_MASS_HALF_WIDTH: f64 = 25.0;

/// Absolute floor on characteristic-functional and correlation thresholds.
pub const DEVIATION_FLOOR: f64 = 0.05;

/// `‖h‖²` values at which the characteristic functional is evaluated.
pub const CHAR_FUNCTIONAL_NORMS: [f64; 3] = [0.25, 1.0, 4.0];

/// Fraction of `T` covered by each of the two independence intervals.
const INTERVAL_FRACTION: f64 = 0.375;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    KernelCheck,
    Whiteness,
    CharFunctional,
    Independence,
    PowerSweep,
    Poly,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::KernelCheck,
        Experiment::Whiteness,
        Experiment::CharFunctional,
        Experiment::Independence,
        Experiment::PowerSweep,
        Experiment::Poly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::KernelCheck => "kernel-check",
            Experiment::Whiteness => "whiteness",
            Experiment::CharFunctional => "char-functional",
            Experiment::Independence => "independence",
            Experiment::PowerSweep => "power-sweep",
            Experiment::Poly => "poly",
        }
    }

    /// Whether the experiment draws Monte Carlo replications.
    pub fn is_sampling(self) -> bool {
        self != Experiment::KernelCheck
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!(
                    "unknown experiment `{s}`, expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Both => "both",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(format!(
                "unknown format `{other}`, expected csv, json or both"
            )),
        }
    }
}

/// Orthonormal system used for projections. Only the trigonometric basis
/// is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Trig,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("trig")
    }
}

impl FromStr for BasisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "trig" => Ok(BasisKind::Trig),
            other => Err(format!("unknown basis `{other}`, expected trig")),
        }
    }
}

/// The `f`/`h` used by experiments that need a single test function.
///
/// Written as `basis:K` (the K-th basis function, 0-based), `const` (the
/// constant 1 on `[0, T]`) or `probe:t1,t2,...` (unit point evaluations at
/// grid nodes; times may be fractions such as `35/96`).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionSpec {
    Basis(usize),
    Const,
    Probe(Vec<f64>),
}

impl fmt::Display for TestFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunctionSpec::Basis(k) => write!(f, "basis:{k}"),
            TestFunctionSpec::Const => f.write_str("const"),
            TestFunctionSpec::Probe(times) => {
                f.write_str("probe:")?;
                f.write_str(&join(times))
            }
        }
    }
}

impl FromStr for TestFunctionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "const" {
            return Ok(TestFunctionSpec::Const);
        }
        if let Some(k) = s.strip_prefix("basis:") {
            return k
                .parse()
                .map(TestFunctionSpec::Basis)
                .map_err(|_| format!("`{k}` is not a basis index"));
        }
        if let Some(list) = s.strip_prefix("probe:") {
            let times = parse_list(list, parse_real)?;
            if times.is_empty() {
                return Err("probe needs at least one time".into());
            }
            return Ok(TestFunctionSpec::Probe(times));
        }
        Err(format!(
            "unknown test function `{s}`, expected basis:K, const or probe:t1,t2,..."
        ))
    }
}

/// Fully resolved description of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    #[serde(rename = "W")]
    pub w_list: Vec<f64>,
    pub n: u32,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub basis_size: usize,
    pub seed: u64,
    /// Worker threads; `0` lets the pool decide. Never affects results.
    pub workers: usize,
    pub oversample: u32,
    pub pad_taps: u32,
    pub method: SynthMethod,
    /// `None` writes to stdout.
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub basis: BasisKind,
    pub test_function: TestFunctionSpec,
    /// Polynomial coefficients `c_1..c_n` for `poly`.
    pub coeffs: Option<Vec<f64>>,
}

impl ExperimentSpec {
    /// Process parameters for one bandwidth.
    pub fn process_config(&self, w: f64) -> ProcessConfig {
        ProcessConfig::new(w, self.horizon, self.seed)
            .with_oversample(self.oversample)
            .with_pad_taps(self.pad_taps)
            .with_method(self.method)
    }

    /// All keys with their resolved values, in [`CONFIG_KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = vec![
            ("experiment", self.experiment.to_string()),
            ("W", join(&self.w_list)),
            ("n", self.n.to_string()),
            ("M", self.m.to_string()),
            ("T", self.horizon.to_string()),
            ("N", self.basis_size.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("oversample", self.oversample.to_string()),
            ("pad_taps", self.pad_taps.to_string()),
            ("method", self.method.to_string()),
            (
                "out",
                self.out
                    .as_ref()
                    .map_or_else(|| "-".to_string(), |p| p.display().to_string()),
            ),
            ("format", self.format.to_string()),
            ("basis", self.basis.to_string()),
            ("test_function", self.test_function.to_string()),
        ];
        if let Some(c) = &self.coeffs {
            pairs.push(("coeffs", join(c)));
        }
        pairs
    }

    /// Config-file text that parses back to this spec.
    pub fn to_config_string(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// A configuration problem, naming the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] Error),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) | HarnessError::Io { .. } => 3,
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        let (kind, key) = match self {
            HarnessError::Config(e) => ("config", Some(e.key.clone())),
            HarnessError::Runtime(_) => ("runtime", None),
            HarnessError::Io { .. } => ("io", None),
        };
        serde_json::json!({
            "error": { "kind": kind, "key": key, "message": self.to_string() }
        })
        .to_string()
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    s.split(',').map(|p| item(p.trim())).collect()
}

/// A finite real, optionally written as a fraction `p/q`.
fn parse_real(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("`{s}` is not a number"))?;
            let q: f64 = q
                .trim()
                .parse()
                .map_err(|_| format!("`{s}` is not a number"))?;
            p / q
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Splits config text into key/value pairs. Blank lines and `#` comments
/// are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::new(
                line,
                format!("line {} is not of the form key=value", lineno + 1),
            )
        })?;
        let key = key.trim();
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::new(key, "given more than once"));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Resolves config-file text and flag overrides into a spec.
///
/// Precedence is flags > file > defaults. Unknown keys, missing required
/// keys (`experiment`, `W`), unparsable values and out-of-range values are
/// errors naming the key.
pub fn parse_config(
    file: Option<&str>,
    overrides: &[(String, String)],
) -> Result<ExperimentSpec, ConfigError> {
    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    let file_pairs = match file {
        Some(text) => parse_config_text(text)?,
        None => Vec::new(),
    };
    for (k, v) in file_pairs.into_iter().chain(overrides.iter().cloned()) {
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(ConfigError::new(k, "unknown key"));
        }
        raw.insert(k, v);
    }
    resolve(&raw)
}

/// Reads a config file (if any) and applies overrides.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentSpec, ConfigError> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
            ConfigError::new("config", format!("cannot read {}: {e}", p.display()))
        })?),
        None => None,
    };
    parse_config(text.as_deref(), overrides)
}

fn resolve(raw: &BTreeMap<String, String>) -> Result<ExperimentSpec, ConfigError> {
    fn get<T>(
        raw: &BTreeMap<String, String>,
        key: &str,
        default: Option<T>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        match raw.get(key) {
            Some(v) => parse(v).map_err(|r| ConfigError::new(key, r)),
            None => default.ok_or_else(|| ConfigError::new(key, "required key is missing")),
        }
    }
    fn int<T: FromStr>(s: &str) -> Result<T, String> {
        s.parse()
            .map_err(|_| format!("`{s}` is not a non-negative integer in range"))
    }
    fn at_least<T: PartialOrd + fmt::Display + Copy>(
        key: &str,
        v: T,
        lo: T,
    ) -> Result<T, ConfigError> {
        if v < lo {
            Err(ConfigError::new(key, format!("must be >= {lo}, got {v}")))
        } else {
            Ok(v)
        }
    }

    let experiment: Experiment = get(raw, "experiment", None, |s| s.parse())?;
    let w_list = get(raw, "W", None, |s| parse_list(s, parse_real))?;
    if let Some(w) = w_list.iter().find(|w| **w <= 0.0) {
        return Err(ConfigError::new(
            "W",
            format!("bandwidths must be > 0, got {w}"),
        ));
    }
    let coeffs: Option<Vec<f64>> = match raw.get("coeffs") {
        Some(s) => {
            let c = parse_list(s, parse_real).map_err(|r| ConfigError::new("coeffs", r))?;
            if c.last().is_none_or(|&lead| lead == 0.0) {
                return Err(ConfigError::new(
                    "coeffs",
                    "leading coefficient must be nonzero",
                ));
            }
            Some(c)
        }
        None => None,
    };
    let default_n = coeffs.as_ref().map_or(2, |c| c.len() as u32);
    let n: u32 = at_least("n", get(raw, "n", Some(default_n), int)?, 1)?;
    if n > MAX_HERMITE_ORDER {
        return Err(ConfigError::new(
            "n",
            format!("must be <= {MAX_HERMITE_ORDER}, got {n}"),
        ));
    }
    if let Some(c) = &coeffs {
        if experiment != Experiment::Poly {
            return Err(ConfigError::new(
                "coeffs",
                "only used by the poly experiment",
            ));
        }
        if c.len() as u32 != n {
            return Err(ConfigError::new(
                "coeffs",
                format!("has degree {} but n = {n}", c.len()),
            ));
        }
    }
    let m: usize = get(raw, "M", Some(20_000), int)?;
    let m = if experiment.is_sampling() {
        at_least("M", m, 100)?
    } else {
        m
    };
    let horizon = get(raw, "T", Some(1.0), parse_real)?;
    if horizon <= 0.0 {
        return Err(ConfigError::new("T", format!("must be > 0, got {horizon}")));
    }
    let basis_size: usize = at_least("N", get(raw, "N", Some(8), int)?, 1)?;
    let seed: u64 = get(raw, "seed", Some(0), int)?;
    let workers: usize = get(raw, "workers", Some(0), int)?;
    let oversample: u32 = at_least("oversample", get(raw, "oversample", Some(4), int)?, 1)?;
    let pad_taps: u32 = at_least("pad_taps", get(raw, "pad_taps", Some(64), int)?, 1)?;
    let method: SynthMethod = get(raw, "method", Some(SynthMethod::Fft), |s| {
        s.parse().map_err(|e: Error| e.to_string())
    })?;
    let out = get(raw, "out", Some(None), |s| {
        Ok(match s {
            "" => return Err("must be a path or `-`".to_string()),
            "-" => None,
            p => Some(PathBuf::from(p)),
        })
    })?;
    let format = get(raw, "format", Some(OutputFormat::Csv), str::parse)?;
    let basis = get(raw, "basis", Some(BasisKind::Trig), str::parse)?;
    let default_tf = match experiment {
        Experiment::Independence => TestFunctionSpec::Const,
        _ => TestFunctionSpec::Basis(1.min(basis_size - 1)),
    };
    let test_function = get(raw, "test_function", Some(default_tf), str::parse)?;

    let spec = ExperimentSpec {
        experiment,
        w_list,
        n,
        m,
        horizon,
        basis_size,
        seed,
        workers,
        oversample,
        pad_taps,
        method,
        out,
        format,
        basis,
        test_function,
        coeffs,
    };
    check_grids(&spec)?;
    Ok(spec)
}

/// Checks, for every W, that the basis is resolved by the grid and that the
/// test function can be built on it.
fn check_grids(spec: &ExperimentSpec) -> Result<(), ConfigError> {
    if !spec.experiment.is_sampling() {
        return Ok(());
    }
    if let TestFunctionSpec::Basis(k) = spec.test_function {
        if k >= spec.basis_size {
            return Err(ConfigError::new(
                "test_function",
                format!(
                    "basis index {k} is out of range for N = {}",
                    spec.basis_size
                ),
            ));
        }
    }
    for &w in &spec.w_list {
        let grid = spec
            .process_config(w)
            .horizon_grid()
            .map_err(|e| ConfigError::new("W", e.to_string()))?;
        if spec.experiment == Experiment::Whiteness
            || matches!(spec.test_function, TestFunctionSpec::Basis(_))
        {
            make_trig_basis(spec.basis_size, spec.horizon, &grid)
                .map_err(|e| ConfigError::new("N", format!("at W = {w}: {e}")))?;
        }
        if let TestFunctionSpec::Probe(times) = &spec.test_function {
            TestFunction::probe(grid.clone(), times)
                .map_err(|e| ConfigError::new("test_function", format!("at W = {w}: {e}")))?;
        }
    }
    Ok(())
}

/// Seeds and stream ids behind one bandwidth's replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    #[serde(rename = "W")]
    pub w: f64,
    pub seed: u64,
    /// Replication ids `0..streams` were used as ChaCha stream ids.
    pub streams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRecord {
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub metric: String,
    pub verdict: Verdict,
}

/// Everything a run produced, plus what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    /// Resolved config as key/value strings; feeding it back through
    /// [`parse_config`] reproduces the run.
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<SeedRecord>,
    pub wall_clock_seconds: f64,
    pub reports: Vec<StatReport>,
    pub verdicts: Vec<VerdictRecord>,
    pub passed: bool,
}

impl RunManifest {
    /// Metrics in report order, `(W, metric)` sorted.
    pub fn rows(&self) -> Vec<Row<'_>> {
        let mut rows: Vec<Row<'_>> = self
            .reports
            .iter()
            .flat_map(|r| {
                r.metrics.iter().map(move |m| Row {
                    meta: &r.meta,
                    metric: m,
                })
            })
            .collect();
        rows.sort_by(|a, b| {
            let wa = a.meta.w.unwrap_or(f64::NEG_INFINITY);
            let wb = b.meta.w.unwrap_or(f64::NEG_INFINITY);
            wa.total_cmp(&wb)
                .then_with(|| a.metric.name.cmp(&b.metric.name))
        });
        rows
    }

    /// The metric `name` at bandwidth `w`.
    pub fn metric(&self, w: f64, name: &str) -> Option<&Metric> {
        self.reports
            .iter()
            .filter(|r| r.meta.w == Some(w))
            .flat_map(|r| r.metrics.iter())
            .find(|m| m.name == name)
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub meta: &'a ReportMeta,
    pub metric: &'a Metric,
}

/// Executes the experiment over every W in the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunManifest, HarnessError> {
    let started = Instant::now();
    let reports = with_workers(spec.workers, || -> Result<Vec<StatReport>, Error> {
        let mut reports = Vec::new();
        for &w in &spec.w_list {
            reports.extend(run_one(spec, w)?);
        }
        Ok(reports)
    })??;
    let seeds = if spec.experiment.is_sampling() {
        spec.w_list
            .iter()
            .map(|&w| SeedRecord {
                w,
                seed: spec.seed,
                streams: spec.m,
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: spec.experiment,
        config: spec
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        seeds,
        wall_clock_seconds: 0.0,
        reports,
        verdicts: Vec::new(),
        passed: false,
    };
    manifest.verdicts = manifest
        .rows()
        .iter()
        .map(|r| VerdictRecord {
            w: r.meta.w,
            metric: r.metric.name.clone(),
            verdict: r.metric.verdict,
        })
        .collect();
    manifest.passed = manifest.verdicts.iter().all(|v| v.verdict.passed());
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(manifest)
}

fn run_one(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    match spec.experiment {
        Experiment::KernelCheck => kernel_check(spec, w),
        Experiment::Whiteness => whiteness(spec, w),
        Experiment::CharFunctional => char_functional(spec, w),
        Experiment::Independence => independence(spec, w),
        Experiment::PowerSweep => power_sweep(spec, w),
        Experiment::Poly => poly(spec, w),
    }
}

fn meta(spec: &ExperimentSpec, w: f64, n: u32, m: usize) -> ReportMeta {
    ReportMeta {
        w: Some(w),
        n: Some(n),
        m,
        seed: spec.experiment.is_sampling().then_some(spec.seed),
    }
}

fn power_transform(n: u32) -> Transform {
    if n == 1 {
        Transform::Base
    } else {
        Transform::Power(n)
    }
}

/// Tolerance on intensity ratios: 10% up to cubes, 15% beyond.
pub fn intensity_tolerance(n: u32) -> f64 {
    if n <= 3 {
        0.10
    } else {
        0.15
    }
}

fn test_function(spec: &ExperimentSpec, grid: &SampleGrid) -> Result<TestFunction, Error> {
    match &spec.test_function {
        TestFunctionSpec::Basis(k) => {
            let basis = make_trig_basis(spec.basis_size, spec.horizon, grid)?;
            basis
                .get(*k)
                .cloned()
                .ok_or_else(|| Error::invalid("test_function", format!("no basis function {k}")))
        }
        TestFunctionSpec::Const => Ok(TestFunction::from_fn(grid.clone(), |_| 1.0)),
        TestFunctionSpec::Probe(times) => TestFunction::probe(grid.clone(), times),
    }
}

/// `[0, a]` and `[b, end]` with `a ≈ 0.375 T`, `b ≈ 0.625 T` snapped to nodes.
fn disjoint_intervals(grid: &SampleGrid, horizon: f64) -> ((f64, f64), (f64, f64)) {
    let node = |t: f64| grid.time((t / grid.step()).round() as usize);
    (
        (grid.start(), node(INTERVAL_FRACTION * horizon)),
        (node((1.0 - INTERVAL_FRACTION) * horizon), grid.end()),
    )
}

fn renamed(report: StatReport, prefix: &str) -> StatReport {
    let mut report = report;
    for m in &mut report.metrics {
        m.name = format!("{prefix}_{}", m.name);
    }
    report
}

fn kernel_check(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    let meta = meta(spec, w, spec.n, 0);
    let l = UNIT_MASS_HALF_WIDTH;
    let mass = squared_kernel_mass(w, l)?;
    // Accepted range [1 - 1/(W π² L) - 1e-6, 1 + 1e-6].
    let lo = 1.0 - 1.0 / (w * std::f64::consts::PI.powi(2) * l) - 1e-6;
    let hi = 1.0 + 1e-6;
    let mut report = StatReport::new("kernel_check", meta).with(Metric::new(
        "unit_mass",
        mass.value,
        mass.error,
        None,
        0.5 * (hi - lo),
        Rule::Deviation {
            target: 0.5 * (hi + lo),
        },
    ));

    if spec.n <= MAX_WICK_ORDER {
        let rhos = [-1.0, -0.6, -0.2, 0.1, 0.5, 0.9];
        let mut worst = 0.0f64;
        for variance in [1.0, 2.0 * w] {
            for &rho in &rhos {
                let hermite = power_cov_rho(spec.n, rho, variance)?;
                let wick = wick_cov_oracle(spec.n, rho, variance)?;
                let scale = hermite.abs().max(wick.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max((hermite - wick).abs() / scale);
            }
        }
        report = report.with(Metric::new(
            "oracle_equivalence",
            worst,
            0.0,
            None,
            1e-12,
            Rule::AtMost,
        ));
    }

    let step = (1.0 / (4.0 * w)).min(1.0 / 16.0);
    let bump = gaussian_bump(1.0, 12.0, step)?;
    let err = delta_action_error(spec.n, w, &bump)?;
    report = report.with(Metric::new(
        "delta_action_error",
        err,
        0.0,
        None,
        DEVIATION_FLOOR,
        Rule::AtMost,
    ));
    Ok(vec![report])
}

fn cf_threshold(m: usize) -> f64 {
    DEVIATION_FLOOR.max(Z_THRESHOLD / (m as f64).sqrt())
}

fn char_functional_reports(
    samples_unit: &[f64],
    meta: &ReportMeta,
) -> Result<Vec<StatReport>, Error> {
    CHAR_FUNCTIONAL_NORMS
        .iter()
        .map(|&h2| {
            let c = h2.sqrt();
            let scaled: Vec<f64> = samples_unit.iter().map(|s| c * s).collect();
            let est = empirical_char_functional(&scaled, h2)?;
            let name = format!("char_functional_h2_{h2}");
            Ok(est.report(&name, Some(cf_threshold(est.m)), meta.clone()))
        })
        .collect()
}

fn unit_h(spec: &ExperimentSpec, grid: &SampleGrid) -> Result<(TestFunction, f64), Error> {
    let h = test_function(spec, grid)?;
    let norm = h.norm_sq().sqrt();
    if norm <= 0.0 {
        return Err(Error::Degenerate("test function has zero norm".into()));
    }
    Ok((h, norm))
}

fn whiteness(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    let config = spec.process_config(w);
    let grid = config.horizon_grid()?;
    let basis = make_trig_basis(spec.basis_size, spec.horizon, &grid)?;
    let (h, h_norm) = unit_h(spec, &grid)?;
    let one = TestFunction::from_fn(grid.clone(), |_| 1.0);
    let (i1, i2) = disjoint_intervals(&grid, spec.horizon);
    let mut functionals = basis.functions().to_vec();
    functionals.push(h);
    functionals.push(one.restricted(i1.0, i1.1)?);
    functionals.push(one.restricted(i2.0, i2.1)?);
    let transform = power_transform(spec.n);
    let set = run_replications(&config, &transform, &functionals, spec.m)?;
    let nb = basis.len();
    let meta = meta(spec, w, spec.n, spec.m);

    // The payload also carries h and the interval functionals; restrict the
    // covariance to the basis columns.
    let rows: Vec<Vec<f64>> = (0..set.replications())
        .map(|i| set.row(i)[..nb].to_vec())
        .collect();
    let basis_set = ReplicationSet::from_rows(config, transform, rows)?;
    let mut reports = vec![empirical_cov(&basis_set)?.report(None)];

    let h_samples: Vec<f64> = set.column(nb).iter().map(|s| s / h_norm).collect();
    reports.extend(char_functional_reports(&h_samples, &meta)?);

    for k in 0..nb {
        let g = gaussianity_report("gaussianity", &set.column(k), meta.clone())?;
        reports.push(renamed(g, &format!("gaussianity_k{k:02}")));
    }

    let corr = correlation(&set.column(nb + 1), &set.column(nb + 2))?;
    reports.push(corr.report("independence", Some(cf_threshold(spec.m)), meta));
    Ok(reports)
}

fn char_functional(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    let config = spec.process_config(w);
    let grid = config.horizon_grid()?;
    let (h, h_norm) = unit_h(spec, &grid)?;
    let set = run_replications(&config, &power_transform(spec.n), &[h], spec.m)?;
    let samples: Vec<f64> = set.column(0).iter().map(|s| s / h_norm).collect();
    char_functional_reports(&samples, &meta(spec, w, spec.n, spec.m))
}

fn independence(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    let config = spec.process_config(w);
    let grid = config.horizon_grid()?;
    let h = test_function(spec, &grid)?;
    let (i1, i2) = disjoint_intervals(&grid, spec.horizon);
    let corr = cross_interval_corr(&config, &power_transform(spec.n), &h, i1, i2, spec.m)?;
    Ok(vec![corr.report(
        "cross_interval_corr",
        Some(cf_threshold(spec.m)),
        meta(spec, w, spec.n, spec.m),
    )])
}

fn power_sweep(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    let config = spec.process_config(w);
    let grid = config.horizon_grid()?;
    let f = test_function(spec, &grid)?;
    let tol = intensity_tolerance(spec.n);
    let mut report = intensity_check(&config, spec.n, &f, spec.m, Some(tol))?;
    // Finite-W bias of the ratio, without sampling noise.
    let kernel = CovarianceKernel::renormalized_power(spec.n, w)?;
    let exact = bilinear_form(&kernel, &f, &f) / (intensity_constant(spec.n)? * f.norm_sq());
    report.metrics.push(Metric::new(
        "intensity_ratio_exact",
        exact,
        0.0,
        None,
        tol,
        Rule::Deviation { target: 1.0 },
    ));
    Ok(vec![report])
}

fn poly(spec: &ExperimentSpec, w: f64) -> Result<Vec<StatReport>, Error> {
    let config = spec.process_config(w);
    let grid = config.horizon_grid()?;
    let f = test_function(spec, &grid)?;
    let poly = match &spec.coeffs {
        Some(c) => PolySpec::new(c.clone())?,
        None => PolySpec::monomial(spec.n)?,
    };
    let coeffs: Vec<f64> = (1..=poly.degree()).map(|p| poly.coeff(p)).collect();
    let expected = polynomial_intensity(&coeffs, w)? * f.norm_sq();
    let set = run_replications(&config, &Transform::Poly(poly.clone()), &[f], spec.m)?;
    let meta = meta(spec, w, poly.degree(), spec.m);
    let tol = intensity_tolerance(poly.degree());
    Ok(vec![variance_ratio_report(
        "poly_intensity_ratio",
        &set.column(0),
        expected,
        Some(tol),
        meta,
    )?])
}

/// 17 significant digits, locale independent.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Long-format CSV, header first, rows sorted by `(W, metric)`.
pub fn render_csv(manifest: &RunManifest) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in manifest.rows() {
        let m = row.metric;
        let w = row.meta.w.map(format_number).unwrap_or_default();
        let n = row.meta.n.map(|n| n.to_string()).unwrap_or_default();
        let z = m.z.map(format_number).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            manifest.experiment,
            w,
            n,
            row.meta.m,
            m.name,
            format_number(m.estimate),
            format_number(m.stderr),
            z,
            format_number(m.threshold),
            m.verdict,
        ));
    }
    out
}

/// Pretty-printed JSON of the whole manifest.
pub fn render_json(manifest: &RunManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes the report(s). With `out = None` everything goes to `stdout` (CSV
/// first for `both`); with a path, `both` writes `<out>.csv` and `<out>.json`.
/// Returns the files written.
pub fn emit_report(
    manifest: &RunManifest,
    format: OutputFormat,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<Vec<PathBuf>, HarnessError> {
    let wants_csv = format != OutputFormat::Json;
    let wants_json = format != OutputFormat::Csv;
    match out {
        None => {
            let mut text = String::new();
            if wants_csv {
                text.push_str(&render_csv(manifest));
            }
            if wants_json {
                text.push_str(&render_json(manifest));
            }
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| HarnessError::Io {
                    path: "stdout".into(),
                    reason: e.to_string(),
                })?;
            Ok(Vec::new())
        }
        Some(path) => {
            let mut written = Vec::new();
            let (csv_path, json_path) = if format == OutputFormat::Both {
                (path.with_extension("csv"), path.with_extension("json"))
            } else {
                (path.to_path_buf(), path.to_path_buf())
            };
            if wants_csv {
                write_file(&csv_path, &render_csv(manifest))?;
                written.push(csv_path);
            }
            if wants_json {
                write_file(&json_path, &render_json(manifest))?;
                written.push(json_path);
            }
            Ok(written)
        }
    }
}

/// Parse, run, emit. Returns the process exit code.
pub fn run_cli(
    config: Option<&Path>,
    overrides: &[(String, String)],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let result = load_config(config, overrides)
        .map_err(HarnessError::from)
        .and_then(|spec| {
            let manifest = run_experiment(&spec)?;
            emit_report(&manifest, spec.format, spec.out.as_deref(), stdout)?;
            Ok(manifest)
        });
    match result {
        Ok(manifest) if manifest.passed => 0,
        Ok(_) => 1,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.record());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(kv: &[(&str, &str)]) -> Vec<(String, String)> {
        kv.iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(Some("experiment=kernel-check\nW=4\n"), &[]).unwrap();
        assert_eq!(spec.experiment, Experiment::KernelCheck);
        assert_eq!(spec.w_list, vec![4.0]);
        assert_eq!(spec.seed, 0);
        assert_eq!(spec.out, None);
        assert_eq!(spec.format, OutputFormat::Csv);
        assert_eq!(spec.n, 2);
    }

    #[test]
    fn negative_m_names_the_key() {
        let err = parse_config(Some("experiment=whiteness\nW=4\nM=-5\n"), &[]).unwrap_err();
        assert_eq!(err.key, "M");
        let err = parse_config(Some("experiment=whiteness\nW=4\nM=5\n"), &[]).unwrap_err();
        assert_eq!(err.key, "M");
    }

    #[test]
    fn flags_override_file() {
        let spec = parse_config(
            Some("experiment=whiteness\nW=4\nseed=3\n"),
            &pairs(&[("seed", "9")]),
        )
        .unwrap();
        assert_eq!(spec.seed, 9);
    }

    #[test]
    fn unknown_and_missing_keys() {
        assert_eq!(
            parse_config(Some("experiment=whiteness\nW=4\nfoo=1\n"), &[])
                .unwrap_err()
                .key,
            "foo"
        );
        assert_eq!(
            parse_config(Some("experiment=whiteness\n"), &[])
                .unwrap_err()
                .key,
            "W"
        );
        assert_eq!(
            parse_config(Some("W=4\n"), &[]).unwrap_err().key,
            "experiment"
        );
        assert_eq!(
            parse_config(Some("experiment=nope\nW=4\n"), &[])
                .unwrap_err()
                .key,
            "experiment"
        );
        assert_eq!(
            parse_config(Some("experiment=whiteness\nW=4,x\n"), &[])
                .unwrap_err()
                .key,
            "W"
        );
    }

    #[test]
    fn probe_times_accept_fractions() {
        let spec = parse_config(
            Some("experiment=independence\nW=8\noversample=6\nn=1\ntest_function=probe:35/96,61/96\n"),
            &[],
        )
        .unwrap();
        assert_eq!(
            spec.test_function,
            TestFunctionSpec::Probe(vec![35.0 / 96.0, 61.0 / 96.0])
        );
        let err = parse_config(
            Some("experiment=independence\nW=8\ntest_function=probe:0.3\n"),
            &[],
        )
        .unwrap_err();
        assert_eq!(err.key, "test_function");
    }

    #[test]
    fn unresolved_basis_is_a_config_error() {
        let err =
            parse_config(Some("experiment=whiteness\nW=1\nN=40\noversample=1\n"), &[]).unwrap_err();
        assert_eq!(err.key, "N");
    }

    #[test]
    fn round_trip() {
        let spec = parse_config(
            Some("experiment=poly\nW=4,16.5\ncoeffs=-12,0,1\nT=2\nout=x.csv\nformat=both\n"),
            &[],
        )
        .unwrap();
        assert_eq!(spec.n, 3);
        let again = parse_config(Some(&spec.to_config_string()), &[]).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn number_format_has_17_digits() {
        assert_eq!(format_number(1.0), "1.0000000000000000e0");
        assert_eq!(format_number(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn kernel_check_is_deterministic_and_passes() {
        let spec = parse_config(Some("experiment=kernel-check\nW=4,16\n"), &[]).unwrap();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert!(a.passed, "{}", render_csv(&a));
        assert_eq!(render_csv(&a), render_csv(&b));
        assert_eq!(a.rows().len(), 6);
        assert!(a.seeds.is_empty());
    }

    #[test]
    fn empty_manifest_renders_header_only() {
        let spec = parse_config(Some("experiment=kernel-check\nW=4\n"), &[]).unwrap();
        let mut manifest = run_experiment(&spec).unwrap();
        manifest.reports.clear();
        assert_eq!(render_csv(&manifest), format!("{CSV_HEADER}\n"));
    }
}
