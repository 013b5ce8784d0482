//! Monte Carlo statistics with explicit error bars.
//!
//! Replications run in parallel, but every statistic is computed from the
//! payload in replication-id order, so numbers do not depend on the worker
//! count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{intensity_constant, kernel_action, CovarianceKernel};
use crate::synth::{make_path, ProcessConfig, SampleGrid, SampledPath};
use crate::transform::{
    homogeneous_poly, inner_product, power_renormalize, GridFunction, PolySpec, TestFunction,
};

/// Default two-sided z threshold for every sampling test.
pub const Z_THRESHOLD: f64 = 4.0;

/// Asymptotic Kolmogorov distribution quantile at the 1% level.
pub const KS_CRITICAL_1PCT: f64 = 1.6276;

/// Map applied to each base path before projecting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Base,
    Power(u32),
    Poly(PolySpec),
}

impl Transform {
    pub fn apply(&self, path: SampledPath) -> Result<SampledPath> {
        match self {
            Transform::Base => Ok(path),
            Transform::Power(n) => power_renormalize(&path, *n),
            Transform::Poly(spec) => homogeneous_poly(&path, spec),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Base => f.write_str("base"),
            Transform::Power(n) => write!(f, "power({n})"),
            Transform::Poly(spec) => write!(f, "poly(degree {})", spec.degree()),
        }
    }
}

/// Runs `f` on a pool of `workers` threads (`0` = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    Ok(pool.install(f))
}

/// `M` independent replications projected onto a list of functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSet {
    pub config: ProcessConfig,
    pub transform: Transform,
    m: usize,
    n: usize,
    /// Row-major `M x N`; row `i` comes from replication id `i`.
    payload: Vec<f64>,
}

impl ReplicationSet {
    /// Wraps an existing payload, e.g. synthetic null data.
    pub fn from_rows(
        config: ProcessConfig,
        transform: Transform,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::invalid(
                "M",
                format!("need at least 2 replications, got {m}"),
            ));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(
                "payload",
                "rows must be non-empty and equally long",
            ));
        }
        let payload: Vec<f64> = rows.into_iter().flatten().collect();
        if payload.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("replication payload".into()));
        }
        Ok(Self {
            config,
            transform,
            m,
            n,
            payload,
        })
    }

    pub fn replications(&self) -> usize {
        self.m
    }

    pub fn functionals(&self) -> usize {
        self.n
    }

    /// Seed and stream ids `0..M` that produced the rows.
    pub fn seeds(&self) -> (u64, std::ops::Range<u64>) {
        (self.config.seed, 0..self.m as u64)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.payload[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.payload[i * self.n + j]).collect()
    }
}

/// Generates `M` paths (replication ids `0..M`), applies `transform` and
/// integrates against each functional over that functional's own grid.
pub fn run_replications(
    config: &ProcessConfig,
    transform: &Transform,
    functionals: &[TestFunction],
    m: usize,
) -> Result<ReplicationSet> {
    if m < 2 {
        return Err(Error::invalid(
            "M",
            format!("need at least 2 replications, got {m}"),
        ));
    }
    if functionals.is_empty() {
        return Err(Error::invalid(
            "functionals",
            "need at least one functional",
        ));
    }
    config.validate()?;
    let rows: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|id| {
            let path = transform.apply(make_path(config, id)?)?;
            functionals
                .iter()
                .map(|f| inner_product(&path, f, f.grid().start(), f.grid().end()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    ReplicationSet::from_rows(config.clone(), transform.clone(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Degenerate,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Degenerate => "degenerate",
        })
    }
}

/// How a metric's verdict is decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rule {
    /// `|z| <= threshold`.
    AbsZ,
    /// `|estimate - target| <= threshold`.
    Deviation { target: f64 },
    /// `estimate <= threshold`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub z: Option<f64>,
    pub threshold: f64,
    pub rule: Rule,
    pub verdict: Verdict,
}

impl Metric {
    pub fn new(
        name: impl Into<String>,
        estimate: f64,
        stderr: f64,
        z: Option<f64>,
        threshold: f64,
        rule: Rule,
    ) -> Self {
        let ok = match rule {
            Rule::AbsZ => z.is_some_and(|z| z.abs() <= threshold),
            Rule::Deviation { target } => (estimate - target).abs() <= threshold,
            Rule::AtMost => estimate <= threshold,
        };
        Self {
            name: name.into(),
            estimate,
            stderr,
            z,
            threshold,
            rule,
            verdict: Verdict::from_bool(ok),
        }
    }

    pub fn degenerate(name: impl Into<String>, threshold: f64, rule: Rule) -> Self {
        Self {
            name: name.into(),
            estimate: 0.0,
            stderr: 0.0,
            z: None,
            threshold,
            rule,
            verdict: Verdict::Degenerate,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub n: Option<u32>,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    pub metrics: Vec<Metric>,
    pub meta: ReportMeta,
}

impl StatReport {
    pub fn new(name: impl Into<String>, meta: ReportMeta) -> Self {
        Self {
            name: name.into(),
            metrics: Vec::new(),
            meta,
        }
    }

    pub fn with(mut self, metric: Metric) -> Self {
        self.metrics.push(metric);
        self
    }

    pub fn passed(&self) -> bool {
        !self.metrics.is_empty() && self.metrics.iter().all(Metric::passed)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

fn set_meta(set: &ReplicationSet) -> ReportMeta {
    ReportMeta {
        w: Some(set.config.w),
        n: match set.transform {
            Transform::Base => Some(1),
            Transform::Power(n) => Some(n),
            Transform::Poly(ref p) => Some(p.degree()),
        },
        m: set.m,
        seed: Some(set.config.seed),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Central moments `(m2, m3, m4)` with divisor `M`.
fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let mu = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let n = xs.len() as f64;
    (m2 / n, m3 / n, m4 / n)
}

/// Sample covariance matrix of a replication set.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: Vec<Vec<f64>>,
    /// `(Ĉ_ij - δ_ij) / sqrt((1 + δ_ij)/M)`.
    pub z: Vec<Vec<f64>>,
    /// `max |Ĉ - I|`.
    pub max_deviation: f64,
    pub degenerate_columns: Vec<usize>,
    pub m: usize,
    meta: ReportMeta,
}

impl CovarianceEstimate {
    /// Null bound `5 sqrt(2/M)` on `max |Ĉ - I|`.
    pub fn default_threshold(&self) -> f64 {
        5.0 * (2.0 / self.m as f64).sqrt()
    }

    pub fn report(&self, threshold: Option<f64>) -> StatReport {
        let threshold = threshold.unwrap_or_else(|| self.default_threshold());
        let metric = if self.degenerate_columns.is_empty() {
            let max_z = self
                .z
                .iter()
                .flatten()
                .fold(0.0f64, |acc, z| acc.max(z.abs()));
            Metric::new(
                "projection_cov",
                self.max_deviation,
                (2.0 / self.m as f64).sqrt(),
                Some(max_z),
                threshold,
                Rule::AtMost,
            )
        } else {
            Metric::degenerate("projection_cov", threshold, Rule::AtMost)
        };
        StatReport::new("projection_cov", self.meta.clone()).with(metric)
    }
}

/// Unbiased sample covariance of the payload columns, compared with the identity.
pub fn empirical_cov(set: &ReplicationSet) -> Result<CovarianceEstimate> {
    let (m, n) = (set.m, set.n);
    if m < 10 {
        return Err(Error::invalid(
            "M",
            format!("covariance needs M >= 10, got {m}"),
        ));
    }
    let means: Vec<f64> = (0..n).map(|j| mean(&set.column(j))).collect();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..m {
        let row = set.row(i);
        for a in 0..n {
            let da = row[a] - means[a];
            for b in a..n {
                matrix[a][b] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = (m - 1) as f64;
    for a in 0..n {
        for b in a..n {
            matrix[a][b] /= denom;
            matrix[b][a] = matrix[a][b];
        }
    }
    let degenerate_columns: Vec<usize> = (0..n).filter(|&j| matrix[j][j] <= 0.0).collect();
    let mut max_deviation = 0.0f64;
    let z = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let dev = matrix[a][b] - delta;
                    max_deviation = max_deviation.max(dev.abs());
                    dev / ((1.0 + delta) / m as f64).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(CovarianceEstimate {
        matrix,
        z,
        max_deviation,
        degenerate_columns,
        m,
        meta: set_meta(set),
    })
}

/// `Ĉ(h) = (1/M) Σ exp(i s_m)` against `exp(-‖h‖²/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFunctionalEstimate {
    pub re: f64,
    pub im: f64,
    pub target: f64,
    pub deviation: f64,
    /// Monte Carlo radius `4/√M`.
    pub radius: f64,
    pub m: usize,
}

impl CharFunctionalEstimate {
    pub fn report(&self, name: &str, threshold: Option<f64>, meta: ReportMeta) -> StatReport {
        let threshold = threshold.unwrap_or(self.radius);
        let se = self.radius / Z_THRESHOLD;
        StatReport::new(name, meta).with(Metric::new(
            name,
            self.deviation,
            se,
            Some(self.deviation / se),
            threshold,
            Rule::AtMost,
        ))
    }
}

pub fn empirical_char_functional(
    samples: &[f64],
    h_norm_sq: f64,
) -> Result<CharFunctionalEstimate> {
    let m = samples.len();
    if m < 100 {
        return Err(Error::invalid(
            "M",
            format!("characteristic functional needs M >= 100, got {m}"),
        ));
    }
    if !(h_norm_sq.is_finite() && h_norm_sq >= 0.0) {
        return Err(Error::invalid(
            "h_norm_sq",
            format!("must be finite and >= 0, got {h_norm_sq}"),
        ));
    }
    let (mut re, mut im) = (0.0, 0.0);
    for &s in samples {
        re += s.cos();
        im += s.sin();
    }
    re /= m as f64;
    im /= m as f64;
    let target = (-0.5 * h_norm_sq).exp();
    Ok(CharFunctionalEstimate {
        re,
        im,
        target,
        deviation: (re - target).hypot(im),
        radius: Z_THRESHOLD / (m as f64).sqrt(),
        m,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample KS distance between `samples` and the normal fitted by their
/// mean and standard deviation. `None` for zero variance.
pub fn ks_normal_fitted(samples: &[f64]) -> Option<f64> {
    let m = samples.len();
    let mu = mean(samples);
    let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    if var <= 0.0 {
        return None;
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mu) / sd).collect();
    z.sort_by(f64::total_cmp);
    let mf = m as f64;
    Some(z.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let cdf = normal_cdf(x);
        d.max((i as f64 + 1.0) / mf - cdf).max(cdf - i as f64 / mf)
    }))
}

/// Two-sample KS statistic and its asymptotic 1% critical value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("samples", "both samples must be non-empty"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok((d, KS_CRITICAL_1PCT * ((n + m) / (n * m)).sqrt()))
}

/// Skewness, excess kurtosis and KS distance of `samples` against normality.
pub fn gaussianity_report(name: &str, samples: &[f64], meta: ReportMeta) -> Result<StatReport> {
    let m = samples.len();
    if m < 100 {
        return Err(Error::invalid(
            "M",
            format!("gaussianity needs M >= 100, got {m}"),
        ));
    }
    let mf = m as f64;
    let ks_crit = KS_CRITICAL_1PCT / mf.sqrt();
    let (m2, m3, m4) = central_moments(samples);
    let report = StatReport::new(name, meta);
    let ks = ks_normal_fitted(samples);
    if m2 <= 0.0 || ks.is_none() {
        return Ok(report
            .with(Metric::degenerate("skewness", Z_THRESHOLD, Rule::AbsZ))
            .with(Metric::degenerate("kurtosis", Z_THRESHOLD, Rule::AbsZ))
            .with(Metric::degenerate("ks", ks_crit, Rule::AtMost)));
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    let se1 = (6.0 / mf).sqrt();
    let se2 = (24.0 / mf).sqrt();
    Ok(report
        .with(Metric::new(
            "skewness",
            g1,
            se1,
            Some(g1 / se1),
            Z_THRESHOLD,
            Rule::AbsZ,
        ))
        .with(Metric::new(
            "kurtosis",
            g2,
            se2,
            Some(g2 / se2),
            Z_THRESHOLD,
            Rule::AbsZ,
        ))
        .with(Metric::new(
            "ks",
            ks.unwrap(),
            ks_crit / KS_CRITICAL_1PCT,
            None,
            ks_crit,
            Rule::AtMost,
        )))
}

/// Pearson correlation with its null standard error `1/√M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub rho: f64,
    pub stderr: f64,
    pub m: usize,
}

impl CorrelationEstimate {
    /// Passes when `|ρ̂| <= threshold`; default `4/√M`.
    pub fn report(&self, name: &str, threshold: Option<f64>, meta: ReportMeta) -> StatReport {
        let threshold = threshold.unwrap_or(Z_THRESHOLD * self.stderr);
        let metric = if self.rho.is_finite() {
            Metric::new(
                name,
                self.rho.abs(),
                self.stderr,
                Some(self.rho / self.stderr),
                threshold,
                Rule::AtMost,
            )
        } else {
            Metric::degenerate(name, threshold, Rule::AtMost)
        };
        StatReport::new(name, meta).with(metric)
    }
}

pub fn correlation(a: &[f64], b: &[f64]) -> Result<CorrelationEstimate> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(
            "samples",
            "need two equally long samples of size >= 2",
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Degenerate(
            "zero-variance sample in correlation".into(),
        ));
    }
    Ok(CorrelationEstimate {
        rho: sab / (saa * sbb).sqrt(),
        stderr: 1.0 / (a.len() as f64).sqrt(),
        m: a.len(),
    })
}

/// Correlation across replications of `[Z, h]` over `i1` and over `i2`.
pub fn cross_interval_corr(
    config: &ProcessConfig,
    transform: &Transform,
    h: &TestFunction,
    i1: (f64, f64),
    i2: (f64, f64),
    m: usize,
) -> Result<CorrelationEstimate> {
    for (a, b) in [i1, i2] {
        if !(b > a) {
            return Err(Error::invalid(
                "interval",
                format!("[{a}, {b}] has zero length"),
            ));
        }
        if a < -1e-12 || b > config.horizon + 1e-12 {
            return Err(Error::invalid(
                "interval",
                format!("[{a}, {b}] is not inside [0, {}]", config.horizon),
            ));
        }
    }
    let functionals = [h.restricted(i1.0, i1.1)?, h.restricted(i2.0, i2.1)?];
    let set = run_replications(config, transform, &functionals, m)?;
    correlation(&set.column(0), &set.column(1))
}

/// Unbiased variance with a standard error from the sample's own fourth moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub stderr: f64,
    pub m: usize,
}

pub fn variance_with_stderr(samples: &[f64]) -> Result<VarianceEstimate> {
    let m = samples.len();
    if m < 4 {
        return Err(Error::invalid(
            "M",
            format!("variance needs M >= 4, got {m}"),
        ));
    }
    let mf = m as f64;
    let (m2, _, m4) = central_moments(samples);
    let variance = m2 * mf / (mf - 1.0);
    // Var(s²) ≈ (μ4 - σ⁴ (M-3)/(M-1)) / M
    let var_of_var = ((m4 - variance * variance * (mf - 3.0) / (mf - 1.0)) / mf).max(0.0);
    Ok(VarianceEstimate {
        variance,
        stderr: var_of_var.sqrt(),
        m,
    })
}

/// Ratio of the empirical variance to `expected`.
///
/// With `tolerance` the verdict is `|ratio - 1| <= tolerance`; without it,
/// `|z| <= 4` with `z = (ratio - 1)/se`.
pub fn variance_ratio_report(
    name: &str,
    samples: &[f64],
    expected: f64,
    tolerance: Option<f64>,
    meta: ReportMeta,
) -> Result<StatReport> {
    if !(expected > 0.0) {
        return Err(Error::invalid("expected", "expected variance must be > 0"));
    }
    let v = variance_with_stderr(samples)?;
    let ratio = v.variance / expected;
    let se = v.stderr / expected;
    let report = StatReport::new(name, meta);
    if v.variance <= 0.0 {
        let rule = Rule::Deviation { target: 1.0 };
        return Ok(report.with(Metric::degenerate(
            name,
            tolerance.unwrap_or(Z_THRESHOLD),
            rule,
        )));
    }
    let z = (ratio - 1.0) / se;
    let metric = match tolerance {
        Some(tol) => Metric::new(
            name,
            ratio,
            se,
            Some(z),
            tol,
            Rule::Deviation { target: 1.0 },
        ),
        None => Metric::new(name, ratio, se, Some(z), Z_THRESHOLD, Rule::AbsZ),
    };
    Ok(report.with(metric))
}

/// Compares `Var([Z^n_W, f])` over `M` replications with `C(n) ‖f‖²`.
pub fn intensity_check(
    config: &ProcessConfig,
    n: u32,
    f: &TestFunction,
    m: usize,
    tolerance: Option<f64>,
) -> Result<StatReport> {
    let set = run_replications(config, &Transform::Power(n), std::slice::from_ref(f), m)?;
    let expected = intensity_constant(n)? * f.norm_sq();
    variance_ratio_report(
        "intensity_ratio",
        &set.column(0),
        expected,
        tolerance,
        set_meta(&set),
    )
}

/// Relative L2 distance between the action of the renormalized n-th power
/// covariance on `f` and `C(n) f`, measured on the central half of `f`'s
/// grid. Deterministic.
pub fn delta_action_error(n: u32, w: f64, f: &TestFunction) -> Result<f64> {
    let grid = f.grid();
    if grid.step() > 1.0 / (4.0 * w) {
        return Err(Error::invalid(
            "f",
            format!(
                "grid step {} does not resolve the kernel at W = {w}",
                grid.step()
            ),
        ));
    }
    let quarter = grid.count() / 4;
    let inner = SampleGrid::new(grid.time(quarter), grid.step(), grid.count() - 2 * quarter)?;
    let kernel = CovarianceKernel::renormalized_power(n, w)?;
    let g = kernel_action(&kernel, f, &inner)?;
    let c = intensity_constant(n)?;
    let f_inner = f.restricted(inner.start(), inner.end())?;
    let diff: Vec<f64> = g
        .values()
        .iter()
        .zip(f_inner.values())
        .map(|(gv, fv)| gv - c * fv)
        .collect();
    let diff = TestFunction::new(inner, diff)?;
    let denom = c * f_inner.norm_sq().sqrt();
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "f vanishes on the evaluation grid".into(),
        ));
    }
    Ok(diff.norm_sq().sqrt() / denom)
}

pub fn delta_action_check(n: u32, w: f64, f: &TestFunction, threshold: f64) -> Result<StatReport> {
    let err = delta_action_error(n, w, f)?;
    let meta = ReportMeta {
        w: Some(w),
        n: Some(n),
        m: 0,
        seed: None,
    };
    Ok(StatReport::new("delta_action", meta).with(Metric::new(
        "delta_action_error",
        err,
        0.0,
        None,
        threshold,
        Rule::AtMost,
    )))
}

/// `exp(-t²/(2σ²))` sampled on `[-half_width, half_width]` with the
/// given step.
pub fn gaussian_bump(sigma: f64, half_width: f64, step: f64) -> Result<TestFunction> {
    let cells = (2.0 * half_width / step).round() as usize;
    let grid = SampleGrid::new(-(cells as f64) * step / 2.0, step, cells + 1)?;
    Ok(TestFunction::from_fn(grid, |t| {
        (-0.5 * (t / sigma).powi(2)).exp()
    }))
}
