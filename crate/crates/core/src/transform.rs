//! Centered and renormalized powers of a base path, homogeneous polynomials,
//! and the grid inner products used to project paths onto test functions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gaussian_moment, power_scale};
use crate::synth::{PathKind, SampleGrid, SampledPath};

/// Polynomial `Σ_{p=1..n} c_p x^p` with `c_n != 0`. `coeffs[p - 1] = c_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySpec {
    coeffs: Vec<f64>,
}

impl PolySpec {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("degree", "polynomial degree must be >= 1"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coeffs", "coefficients must be finite"));
        }
        if *coeffs.last().unwrap() == 0.0 {
            return Err(Error::invalid(
                "coeffs",
                "leading coefficient must be nonzero",
            ));
        }
        Ok(Self { coeffs })
    }

    pub fn monomial(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("degree", "polynomial degree must be >= 1"));
        }
        let mut coeffs = vec![0.0; n as usize];
        coeffs[n as usize - 1] = 1.0;
        Self::new(coeffs)
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.len() as u32
    }

    /// `c_p`, zero outside `1..=degree`.
    pub fn coeff(&self, p: u32) -> f64 {
        if p == 0 {
            0.0
        } else {
            self.coeffs.get(p as usize - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        // Horner on c_1 + c_2 x + …, then one more factor of x.
        x * self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `E[P(X)]` for `X ~ N(0, variance)`.
    pub fn gaussian_mean(&self, variance: f64) -> Result<f64> {
        let mut mean = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 {
                mean += c * gaussian_moment(i as i32 + 1, variance)?;
            }
        }
        Ok(mean)
    }
}

/// Anything sampled on a [`SampleGrid`].
pub trait GridFunction {
    fn grid(&self) -> &SampleGrid;
    fn values(&self) -> &[f64];
}

impl GridFunction for SampledPath {
    fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
}

/// Grid-sampled L2 function integrated with its own quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    grid: SampleGrid,
    values: Vec<f64>,
    quadrature: Quadrature,
}

impl TestFunction {
    pub fn new(grid: SampleGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("test function".into()));
        }
        Ok(Self {
            grid,
            values,
            quadrature: Quadrature::Trapezoid,
        })
    }

    pub fn from_fn(grid: SampleGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().map(f).collect();
        Self {
            grid,
            values,
            quadrature: Quadrature::Trapezoid,
        }
    }

    /// Piecewise-linear spikes of height `1/step` at the given nodes, so that
    /// `[x, probe]` over an interval containing one node is `x` at that node.
    pub fn probe(grid: SampleGrid, nodes: &[f64]) -> Result<Self> {
        let mut values = vec![0.0; grid.count()];
        for &t in nodes {
            let i = grid
                .index_of(t)
                .ok_or_else(|| Error::GridMismatch(format!("probe time {t} is not a grid node")))?;
            if i == 0 || i + 1 == grid.count() {
                return Err(Error::invalid("probe", "probe nodes must be interior"));
            }
            values[i] = 1.0 / grid.step();
        }
        Self::new(grid, values)
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            quadrature: self.quadrature,
        }
    }

    /// `‖f‖²` under the function's quadrature.
    pub fn norm_sq(&self) -> f64 {
        inner_product(self, self, self.grid.start(), self.grid.end())
            .expect("a function is always on its own grid")
    }

    /// Same function restricted to the nodes in `[a, b]`.
    pub fn restricted(&self, a: f64, b: f64) -> Result<Self> {
        let sub = self.grid.sub_grid(a, b)?;
        let i = self
            .grid
            .index_of(sub.start())
            .expect("sub grid starts on a node");
        Self::new(sub.clone(), self.values[i..i + sub.count()].to_vec())
    }
}

impl GridFunction for TestFunction {
    fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    fn values(&self) -> &[f64] {
        &self.values
    }
}

fn node_range(grid: &SampleGrid, a: f64, b: f64, which: &str) -> Result<(usize, usize)> {
    let i = grid.index_of(a);
    let j = grid.index_of(b);
    match (i, j) {
        (Some(i), Some(j)) if i <= j => Ok((i, j)),
        (Some(_), Some(_)) => Err(Error::invalid(
            "interval",
            format!("[{a}, {b}] is reversed"),
        )),
        _ => Err(Error::GridMismatch(format!(
            "[{a}, {b}] endpoints are not nodes of the {which} grid [{}, {}] step {}",
            grid.start(),
            grid.end(),
            grid.step()
        ))),
    }
}

/// `[x, f]_a^b = ∫_a^b x(s) f(s) ds` by composite trapezoid.
///
/// Both grids must share the step and lattice, and `a`, `b` must be nodes of
/// both; nothing is resampled.
pub fn inner_product<X: GridFunction + ?Sized, F: GridFunction + ?Sized>(
    x: &X,
    f: &F,
    a: f64,
    b: f64,
) -> Result<f64> {
    let (xg, fg) = (x.grid(), f.grid());
    if xg.aligned_offset(fg).is_none() {
        return Err(Error::GridMismatch(format!(
            "grids (start {}, step {}) and (start {}, step {}) do not share a lattice",
            xg.start(),
            xg.step(),
            fg.start(),
            fg.step()
        )));
    }
    let (xi, xj) = node_range(xg, a, b, "first")?;
    let (fi, fj) = node_range(fg, a, b, "second")?;
    debug_assert_eq!(xj - xi, fj - fi);
    let xs = &x.values()[xi..=xj];
    let fs = &f.values()[fi..=fj];
    let n = xs.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.5 * (xs[0] * fs[0] + xs[n - 1] * fs[n - 1]);
    for k in 1..n - 1 {
        acc += xs[k] * fs[k];
    }
    Ok(acc * xg.step())
}

fn require_base(path: &SampledPath) -> Result<()> {
    if path.kind != PathKind::Base {
        return Err(Error::invalid(
            "path",
            format!("expected a base path, got {:?}", path.kind),
        ));
    }
    Ok(())
}

/// `Z(t) = (x(t)^n - E[X^n]) / s_n(W)` pointwise.
pub fn power_renormalize(path: &SampledPath, n: u32) -> Result<SampledPath> {
    require_base(path)?;
    if n == 0 {
        return Err(Error::invalid("n", "power must be >= 1"));
    }
    let w = path.config.w;
    let mean = gaussian_moment(n as i32, 2.0 * w)?;
    let scale = power_scale(n, w)?;
    let values = path
        .values
        .iter()
        .map(|&x| (x.powi(n as i32) - mean) / scale)
        .collect();
    SampledPath::new(
        path.grid.clone(),
        values,
        PathKind::Power(n),
        path.config.clone(),
        path.replication_id,
    )
}

/// `Z(t) = (P(x(t)) - E[P(X)]) / s_n(W)` with `n` the degree of `P`.
pub fn homogeneous_poly(path: &SampledPath, spec: &PolySpec) -> Result<SampledPath> {
    require_base(path)?;
    let w = path.config.w;
    let mean = spec.gaussian_mean(2.0 * w)?;
    let scale = power_scale(spec.degree(), w)?;
    let values = path
        .values
        .iter()
        .map(|&x| (spec.eval(x) - mean) / scale)
        .collect();
    SampledPath::new(
        path.grid.clone(),
        values,
        PathKind::Polynomial(spec.clone()),
        path.config.clone(),
        path.replication_id,
    )
}

/// Functions whose trapezoid Gram matrix is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    functions: Vec<TestFunction>,
}

/// Largest tolerated `|G - I|` entry for a [`Basis`].
pub const GRAM_TOLERANCE: f64 = 1e-6;

impl Basis {
    pub fn new(functions: Vec<TestFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::invalid("basis", "needs at least one function"));
        }
        let basis = Self { functions };
        let gram = basis.gram()?;
        for (i, row) in gram.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > GRAM_TOLERANCE {
                    return Err(Error::invalid(
                        "basis",
                        format!("Gram entry ({i}, {j}) = {g} is not orthonormal"),
                    ));
                }
            }
        }
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[TestFunction] {
        &self.functions
    }

    pub fn get(&self, i: usize) -> Option<&TestFunction> {
        self.functions.get(i)
    }

    pub fn gram(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.functions.len();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let (a, b) = (&self.functions[i], &self.functions[j]);
                let v = inner_product(a, b, a.grid().start(), a.grid().end())?;
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        Ok(g)
    }
}

/// `y_i = [φ_i, path]` over each basis function's grid.
pub fn project<X: GridFunction + ?Sized>(path: &X, basis: &Basis) -> Result<Vec<f64>> {
    basis
        .functions
        .iter()
        .map(|phi| inner_product(path, phi, phi.grid().start(), phi.grid().end()))
        .collect()
}

/// `{1/√T, √(2/T) cos(2πkt/T), √(2/T) sin(2πkt/T), …}` truncated to `n` members.
pub fn make_trig_basis(n: usize, horizon: f64, grid: &SampleGrid) -> Result<Basis> {
    if n == 0 {
        return Err(Error::invalid("N", "basis size must be >= 1"));
    }
    if grid.start().abs() > 1e-12 || (grid.end() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "trig basis needs a grid on [0, {horizon}], got [{}, {}]",
            grid.start(),
            grid.end()
        )));
    }
    let max_freq = (n / 2) as f64;
    if max_freq > 0.0 {
        let points_per_period = horizon / max_freq / grid.step();
        if points_per_period < 8.0 {
            return Err(Error::invalid(
                "N",
                format!("grid has {points_per_period:.2} points per period of the highest frequency, need 8"),
            ));
        }
    }
    let c0 = 1.0 / horizon.sqrt();
    let c = (2.0 / horizon).sqrt();
    let functions = (0..n)
        .map(|i| {
            let k = ((i + 1) / 2) as f64;
            let omega = 2.0 * PI * k / horizon;
            if i == 0 {
                TestFunction::from_fn(grid.clone(), |_| c0)
            } else if i % 2 == 1 {
                TestFunction::from_fn(grid.clone(), move |t| c * (omega * t).cos())
            } else {
                TestFunction::from_fn(grid.clone(), move |t| c * (omega * t).sin())
            }
        })
        .collect();
    Basis::new(functions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_path, ProcessConfig};

    fn constant_path(w: f64, value: f64) -> SampledPath {
        let cfg = ProcessConfig::new(w, 1.0, 0);
        let grid = cfg.horizon_grid().unwrap();
        let n = grid.count();
        SampledPath::new(grid, vec![value; n], PathKind::Base, cfg, 0).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let g = SampleGrid::spanning(0.0, 1.0, 0.01).unwrap();
        let one = TestFunction::from_fn(g.clone(), |_| 1.0);
        assert!((inner_product(&one, &one, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-14);

        let h = 2.0 * PI / 6283.0;
        let g = SampleGrid::new(0.0, h, 6284).unwrap();
        let s = TestFunction::from_fn(g.clone(), f64::sin);
        let c = TestFunction::from_fn(g.clone(), f64::cos);
        assert!(inner_product(&s, &c, 0.0, g.end()).unwrap().abs() < 1e-8);
    }

    #[test]
    fn trapezoid_error_is_second_order() {
        let err = |h: f64| {
            let g = SampleGrid::spanning(0.0, 1.0, h).unwrap();
            let t = TestFunction::from_fn(g, |x| x);
            inner_product(&t, &t, 0.0, 1.0).unwrap() - 1.0 / 3.0
        };
        for h in [0.1, 0.05, 0.025] {
            assert!((err(h) - h * h / 6.0).abs() < 1e-14);
        }
        assert!((err(0.05) / err(0.025) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = TestFunction::from_fn(SampleGrid::spanning(0.0, 1.0, 0.01).unwrap(), |_| 1.0);
        let b = TestFunction::from_fn(SampleGrid::spanning(0.0, 1.0, 0.02).unwrap(), |_| 1.0);
        assert!(matches!(
            inner_product(&a, &b, 0.0, 1.0),
            Err(Error::GridMismatch(_))
        ));
        assert!(matches!(
            inner_product(&a, &a, 0.0, 1.005),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn renormalized_square_arithmetic() {
        let z = power_renormalize(&constant_path(1.0, 2.0), 2).unwrap();
        assert!(z.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(z.kind, PathKind::Power(2));
        let z0 = power_renormalize(&constant_path(1.0, 0.0), 2).unwrap();
        assert!(z0.values.iter().all(|&v| (v + 1.0).abs() < 1e-15));
        assert!(power_renormalize(&constant_path(1.0, 0.0), 0).is_err());
        assert!(power_renormalize(&z, 2).is_err());
    }

    #[test]
    fn monomial_poly_equals_power() {
        let cfg = ProcessConfig::new(4.0, 1.0, 3);
        let path = make_path(&cfg, 0).unwrap();
        for n in 1..=4 {
            let a = power_renormalize(&path, n).unwrap();
            let b = homogeneous_poly(&path, &PolySpec::monomial(n).unwrap()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
        assert!(PolySpec::new(vec![]).is_err());
        assert!(PolySpec::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn poly_centering_uses_mixed_moments() {
        let spec = PolySpec::new(vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        assert_eq!(spec.gaussian_mean(3.0).unwrap(), 3.0 + 2.0 * 27.0);
        assert_eq!(spec.eval(2.0), 2.0 + 4.0 + 32.0);
    }

    #[test]
    fn trig_basis_examples() {
        let g = SampleGrid::spanning(0.0, 1.0, 1.0 / 1024.0).unwrap();
        let b1 = make_trig_basis(1, 1.0, &g).unwrap();
        let f = b1.get(0).unwrap();
        assert!((f.norm_sq() - 1.0).abs() < 1e-12);
        let b8 = make_trig_basis(8, 1.0, &g).unwrap();
        let gram = b8.gram().unwrap();
        for (i, row) in gram.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    assert!(v.abs() <= 1e-6);
                }
            }
        }
        let one = TestFunction::from_fn(g.clone(), |_| 1.0);
        assert!(
            inner_product(b8.get(1).unwrap(), &one, 0.0, 1.0)
                .unwrap()
                .abs()
                < 1e-10
        );
        let coarse = SampleGrid::spanning(0.0, 1.0, 1.0 / 16.0).unwrap();
        assert!(make_trig_basis(8, 1.0, &coarse).is_err());
    }

    #[test]
    fn projection_of_zero_and_basis_member() {
        let g = SampleGrid::spanning(0.0, 1.0, 1.0 / 512.0).unwrap();
        let basis = make_trig_basis(8, 1.0, &g).unwrap();
        let zero = TestFunction::from_fn(g.clone(), |_| 0.0);
        assert!(project(&zero, &basis).unwrap().iter().all(|&v| v == 0.0));
        let y = project(basis.get(0).unwrap(), &basis).unwrap();
        assert!((y[0] - 1.0).abs() <= 1e-6);
        assert!(y[1..].iter().all(|v| v.abs() <= 1e-6));
    }

    #[test]
    fn probe_reads_point_values() {
        let g = SampleGrid::spanning(0.0, 1.0, 1.0 / 96.0).unwrap();
        let x = TestFunction::from_fn(g.clone(), |t| t * t);
        let p = TestFunction::probe(g, &[35.0 / 96.0]).unwrap();
        let v = inner_product(&x, &p, 0.0, 0.375).unwrap();
        assert!((v - (35.0f64 / 96.0).powi(2)).abs() < 1e-12);
    }
}
