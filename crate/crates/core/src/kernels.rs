//! Covariance calculus for the flat band-limited Gaussian process.
//!
//! Everything here is deterministic; the Monte Carlo code in
//! [`crate::estimators`] is checked against these values.

use std::f64::consts::PI;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::quadrature::{adaptive_gk, trapezoid_weights, Integral};
use crate::synth::SampleGrid;
use crate::transform::{GridFunction, TestFunction};

/// Below this value of `|2πWt|` the sinc kernel is evaluated by its Taylor series.
const SINC_SERIES_CUTOFF: f64 = 1e-4;

/// Largest `n` accepted by [`hermite_coeffs`].
pub const MAX_HERMITE_ORDER: u32 = 20;

/// Largest `n` accepted by [`wick_cov_oracle`].
pub const MAX_WICK_ORDER: u32 = 6;

/// Flat spectral density `level` on `[-W, W]`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensity {
    bandwidth: f64,
    level: f64,
}

impl SpectralDensity {
    pub fn new(bandwidth: f64, level: f64) -> Result<Self> {
        ensure_positive("W", bandwidth)?;
        ensure_positive("level", level)?;
        Ok(Self { bandwidth, level })
    }

    /// Unit level, the case used throughout the crate.
    pub fn unit(bandwidth: f64) -> Result<Self> {
        Self::new(bandwidth, 1.0)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn density(&self, lambda: f64) -> f64 {
        if lambda.abs() <= self.bandwidth {
            self.level
        } else {
            0.0
        }
    }

    pub fn total_power(&self) -> f64 {
        2.0 * self.bandwidth * self.level
    }
}

fn check_w_t(w: f64, t: f64) -> Result<()> {
    ensure_positive("W", w)?;
    ensure_finite("t", t)
}

/// `sin(x)/x` with a series branch near zero.
fn sin_over(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Normalized correlation `ρ(t) = sin(2πWt)/(2πWt)`.
pub fn sinc_corr(w: f64, t: f64) -> Result<f64> {
    check_w_t(w, t)?;
    Ok(sin_over(2.0 * PI * w * t))
}

/// `R_W(t) = sin(2πWt)/(πt)`, with `R_W(0) = 2W`.
pub fn sinc_cov(w: f64, t: f64) -> Result<f64> {
    Ok(2.0 * w * sinc_corr(w, t)?)
}

/// Covariance of the renormalized square, `R_W(t)² / (2W)`.
pub fn squared_cov(w: f64, t: f64) -> Result<f64> {
    let r = sinc_cov(w, t)?;
    Ok(r * r / (2.0 * w))
}

/// `∫_{-L}^{L} R_W(t)² / (2W) dt`, one Gauss–Kronrod panel between
/// consecutive zeros of `R_W`. Tends to 1 as `L` grows; the missing two
/// tails weigh at most `1/(W π² L)`.
pub fn squared_kernel_mass(w: f64, half_width: f64) -> Result<Integral> {
    ensure_positive("W", w)?;
    ensure_positive("L", half_width)?;
    let zero = 1.0 / (2.0 * w);
    let f = |t: f64| squared_cov(w, t).unwrap_or(f64::NAN);
    let (mut value, mut error) = (0.0, 0.0);
    let mut lo = 0.0;
    while lo < half_width {
        let hi = (lo + zero).min(half_width);
        let r = adaptive_gk(&f, lo, hi, 1e-15)?;
        value += r.value;
        error += r.error;
        lo = hi;
    }
    Ok(Integral {
        value: 2.0 * value,
        error: 2.0 * error,
    })
}

/// `m!! = m(m-2)(m-4)…`, with `0!! = 1`. Overflow is an error.
pub fn double_factorial(m: u32) -> Result<u64> {
    let mut acc: u64 = 1;
    let mut k = m;
    while k > 1 {
        acc = acc
            .checked_mul(u64::from(k))
            .ok_or_else(|| Error::Overflow(format!("{m}!!")))?;
        k -= 2;
    }
    Ok(acc)
}

fn factorial_f64(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `E[X^n]` for `X ~ N(0, variance)`: `(n-1)!! variance^{n/2}` for even `n`, else 0.
pub fn gaussian_moment(n: i32, variance: f64) -> Result<f64> {
    if n < 0 {
        return Err(Error::invalid(
            "n",
            format!("moment order must be >= 0, got {n}"),
        ));
    }
    ensure_positive("variance", variance)?;
    if n % 2 == 1 {
        return Ok(0.0);
    }
    if n == 0 {
        return Ok(1.0);
    }
    let coef = double_factorial(n as u32 - 1)? as f64;
    Ok(coef * variance.powi(n / 2))
}

/// Probabilists' Hermite polynomial `He_k(x)`.
pub fn hermite_he(k: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - f64::from(j) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficients of `x^n = Σ_k b_{n,k} He_k(x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermiteExpansion {
    n: u32,
    /// `coeffs[k] = b_{n,k}`; zero whenever `n - k` is odd.
    coeffs: Vec<u64>,
}

impl HermiteExpansion {
    pub fn order(&self) -> u32 {
        self.n
    }

    pub fn coeff(&self, k: u32) -> u64 {
        self.coeffs.get(k as usize).copied().unwrap_or(0)
    }

    /// Nonzero `(k, b_{n,k})` pairs, highest `k` first.
    pub fn terms(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &b)| b != 0)
            .map(|(k, &b)| (k as u32, b))
    }

    /// `Σ_k b_{n,k} He_k(x)`, which must equal `x^n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.terms().map(|(k, b)| b as f64 * hermite_he(k, x)).sum()
    }
}

/// Expansion of `x^n` in the Hermite basis, via `x He_k = He_{k+1} + k He_{k-1}`.
pub fn hermite_coeffs(n: u32) -> Result<HermiteExpansion> {
    if n == 0 || n > MAX_HERMITE_ORDER {
        return Err(Error::invalid(
            "n",
            format!("Hermite expansion supports 1 <= n <= {MAX_HERMITE_ORDER}, got {n}"),
        ));
    }
    let mut coeffs = vec![0u64; n as usize + 1];
    coeffs[0] = 1;
    for order in 1..=n as usize {
        let mut next = vec![0u64; n as usize + 1];
        for j in 0..=order {
            let from_below = if j >= 1 { coeffs[j - 1] } else { 0 };
            let from_above = if j + 1 < order { coeffs[j + 1] } else { 0 };
            next[j] = (j as u64 + 1)
                .checked_mul(from_above)
                .and_then(|v| v.checked_add(from_below))
                .ok_or_else(|| Error::Overflow(format!("Hermite coefficients of x^{n}")))?;
        }
        coeffs = next;
    }
    Ok(HermiteExpansion { n, coeffs })
}

/// Brute-force `cov(X^n, Y^n)` for jointly Gaussian `(X, Y)` with common
/// variance and correlation `rho`, summing over every pair partition of the
/// `2n` factors (Isserlis).
pub fn wick_cov_oracle(n: u32, rho: f64, variance: f64) -> Result<f64> {
    if n == 0 || n > MAX_WICK_ORDER {
        return Err(Error::invalid(
            "n",
            format!("pairing enumeration supports 1 <= n <= {MAX_WICK_ORDER}, got {n}"),
        ));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid(
            "rho",
            format!("|rho| must be <= 1, got {rho}"),
        ));
    }
    ensure_positive("variance", variance)?;

    let size = 2 * n as usize;
    // Factors 0..n are X, n..2n are Y.
    let pair_cov = |i: usize, j: usize| {
        if (i < n as usize) == (j < n as usize) {
            variance
        } else {
            rho * variance
        }
    };
    fn sum_pairings(unmatched: u32, size: usize, pair_cov: &dyn Fn(usize, usize) -> f64) -> f64 {
        if unmatched == 0 {
            return 1.0;
        }
        let first = unmatched.trailing_zeros() as usize;
        let rest = unmatched & !(1 << first);
        let mut total = 0.0;
        for j in (first + 1)..size {
            if rest & (1 << j) != 0 {
                total += pair_cov(first, j) * sum_pairings(rest & !(1 << j), size, pair_cov);
            }
        }
        total
    }
    let joint = sum_pairings((1u32 << size) - 1, size, &pair_cov);
    let marginal = gaussian_moment(n as i32, variance)?;
    Ok(joint - marginal * marginal)
}

/// Weights `a_k = b_{n,k}² k! (2W)^n`, `k >= 1`, so that
/// `cov(X^n(t), X^n(0)) = Σ_k a_k ρ(t)^k`.
fn power_cov_weights(n: u32, w: f64) -> Result<Vec<(u32, f64)>> {
    let expansion = hermite_coeffs(n)?;
    let scale = (2.0 * w).powi(n as i32);
    Ok(expansion
        .terms()
        .filter(|&(k, _)| k >= 1)
        .map(|(k, b)| {
            let b = b as f64;
            (k, b * b * factorial_f64(k) * scale)
        })
        .collect())
}

/// `cov(X^n, Y^n)` for centered jointly Gaussian `X, Y` with common
/// `variance` and correlation `rho`, via the Hermite expansion of `x^n`.
pub fn power_cov_rho(n: u32, rho: f64, variance: f64) -> Result<f64> {
    ensure_finite("rho", rho)?;
    if rho.abs() > 1.0 {
        return Err(Error::invalid(
            "rho",
            format!("must lie in [-1, 1], got {rho}"),
        ));
    }
    ensure_positive("variance", variance)?;
    // (2W)^n with 2W = variance.
    Ok(power_cov_weights(n, variance / 2.0)?
        .iter()
        .map(|&(k, a)| a * rho.powi(k as i32))
        .sum())
}

/// `cov(X_W^n(t), X_W^n(0))` for the flat band-limited process.
pub fn power_cov(n: u32, w: f64, t: f64) -> Result<f64> {
    power_cov_rho(n, sinc_corr(w, t)?, 2.0 * w)
}

/// Scale `s_n(W) = sqrt(2 (n-1)!! (2W)^{n-1})` of the renormalized n-th power.
/// `s_2 = 2 sqrt(W)`.
pub fn power_scale(n: u32, w: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "power must be >= 1"));
    }
    ensure_positive("W", w)?;
    let df = double_factorial(n - 1)? as f64;
    Ok((2.0 * df * (2.0 * w).powi(n as i32 - 1)).sqrt())
}

/// Even integer `m` such that `L = 2π m` is the quadrature cutoff of
/// [`sinc_power_integral`].
const SINC_POWER_PERIODS: u32 = 20_000;

/// `J_k = ∫ (sin u / u)^k du` over the real line.
///
/// The body `[0, L]` is integrated panel by panel (one panel per half
/// period) with adaptive Gauss–Kronrod. Beyond `L` the non-oscillating part of
/// the tail is added in closed form; the returned `error` is the quadrature
/// estimate plus a bound on the remaining oscillatory tail.
pub fn sinc_power_integral(k: u32) -> Result<Integral> {
    if k == 0 {
        return Err(Error::invalid("k", "power must be >= 1"));
    }
    let integrand = |u: f64| {
        let s = if u == 0.0 { 1.0 } else { u.sin() / u };
        s.powi(k as i32)
    };
    let panels = 2 * SINC_POWER_PERIODS;
    let cutoff = PI * f64::from(panels);
    let mut body = 0.0;
    let mut quad_err = 0.0;
    for p in 0..panels {
        let lo = PI * f64::from(p);
        let r = adaptive_gk(&integrand, lo, lo + PI, 1e-14)?;
        body += r.value;
        quad_err += r.error;
    }

    // One-sided tail beyond L = 2π m, where sin L = 0 and cos L = 1.
    let (tail, tail_bound) = if k == 1 {
        // Asymptotic expansion of ∫_L^∞ sin u / u du; next omitted term is 720/L^7.
        let l = cutoff;
        (
            1.0 / l - 2.0 / l.powi(3) + 24.0 / l.powi(5),
            720.0 / l.powi(7),
        )
    } else {
        // Mean of sin^k over a period times ∫_L^∞ u^{-k}; the zero-mean
        // remainder has an antiderivative bounded by 2π, giving 4π/L^k.
        let mean = if k % 2 == 0 {
            double_factorial(k - 1)? as f64 / double_factorial(k)? as f64
        } else {
            0.0
        };
        let kf = f64::from(k);
        (
            mean / ((kf - 1.0) * cutoff.powf(kf - 1.0)),
            4.0 * PI / cutoff.powf(kf),
        )
    };
    let value = 2.0 * (body + tail);
    let error = 2.0 * (quad_err + tail_bound);
    if error > 1e-8 {
        return Err(Error::Quadrature(format!(
            "J_{k}: error estimate {error:.3e} exceeds 1e-8"
        )));
    }
    Ok(Integral { value, error })
}

/// Limiting white-noise intensity of the renormalized n-th power,
/// `C(n) = Σ_{k>=1} b_{n,k}² k! J_k / (2π (n-1)!!)`.
pub fn intensity_constant(n: u32) -> Result<f64> {
    let expansion = hermite_coeffs(n)?;
    let mut numerator = 0.0;
    for (k, b) in expansion.terms().filter(|&(k, _)| k >= 1) {
        let b = b as f64;
        numerator += b * b * factorial_f64(k) * sinc_power_integral(k)?.value;
    }
    Ok(numerator / (2.0 * PI * double_factorial(n - 1)? as f64))
}

/// `∫ cov(Z(t), Z(0)) dt` over the real line for
/// `Z = (Σ_p c_p X^p - mean) / s_n(W)`, `coeffs[p - 1] = c_p`, `n` the degree.
///
/// Expanding every power in Hermite polynomials of `X/σ`, `σ² = 2W`, gives
/// `Σ_k k! J_k (Σ_p c_p σ^{p-n} b_{p,k})² / (2π (n-1)!!)`. For a monomial this
/// is [`intensity_constant`] at every `W`.
pub fn polynomial_intensity(coeffs: &[f64], w: f64) -> Result<f64> {
    ensure_positive("W", w)?;
    let n = coeffs.len() as u32;
    if n == 0 || *coeffs.last().unwrap() == 0.0 {
        return Err(Error::invalid(
            "coeffs",
            "need a nonzero leading coefficient",
        ));
    }
    let sigma = (2.0 * w).sqrt();
    let expansions = (1..=n).map(hermite_coeffs).collect::<Result<Vec<_>>>()?;
    let mut numerator = 0.0;
    for k in 1..=n {
        let amplitude: f64 = coeffs
            .iter()
            .zip(&expansions)
            .enumerate()
            .map(|(i, (&c, e))| c * sigma.powi(i as i32 + 1 - n as i32) * e.coeff(k) as f64)
            .sum();
        if amplitude != 0.0 {
            numerator += factorial_f64(k) * sinc_power_integral(k)?.value * amplitude * amplitude;
        }
    }
    Ok(numerator / (2.0 * PI * double_factorial(n - 1)? as f64))
}

/// Projection of `X(t)` onto `X(0)`: `X(t) = a X(0) + ν(t)` with `ν`
/// independent of `X(0)`. Returns `(a, Var ν(t))`.
pub fn conditional_decomposition(w: f64, t: f64) -> Result<(f64, f64)> {
    let r0 = 2.0 * w;
    let rt = sinc_cov(w, t)?;
    let a = rt / r0;
    Ok((a, (r0 * r0 - rt * rt) / r0))
}

/// Stationary covariance kernels `K(t)`, even in `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceKernel {
    /// `R_W(t)`.
    Sinc { w: f64 },
    /// `R_W(t)² / (2W)`.
    Squared { w: f64 },
    /// `cov(X^n(t), X^n(0))`, optionally divided by `s_n(W)²`.
    Power(PowerKernel),
    /// Unit mass on one grid cell of width `step` centered at zero.
    DiscreteDelta { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerKernel {
    n: u32,
    w: f64,
    weights: Vec<(u32, f64)>,
}

impl PowerKernel {
    pub fn order(&self) -> u32 {
        self.n
    }

    pub fn bandwidth(&self) -> f64 {
        self.w
    }
}

impl CovarianceKernel {
    pub fn sinc(w: f64) -> Result<Self> {
        ensure_positive("W", w)?;
        Ok(Self::Sinc { w })
    }

    pub fn squared(w: f64) -> Result<Self> {
        ensure_positive("W", w)?;
        Ok(Self::Squared { w })
    }

    pub fn power(n: u32, w: f64) -> Result<Self> {
        ensure_positive("W", w)?;
        Ok(Self::Power(PowerKernel {
            n,
            w,
            weights: power_cov_weights(n, w)?,
        }))
    }

    /// Covariance of `(X^n - m_n)/s_n`; equals [`CovarianceKernel::Squared`] at `n = 2`.
    pub fn renormalized_power(n: u32, w: f64) -> Result<Self> {
        let s = power_scale(n, w)?;
        let s2 = s * s;
        let mut weights = power_cov_weights(n, w)?;
        for (_, a) in &mut weights {
            *a /= s2;
        }
        Ok(Self::Power(PowerKernel { n, w, weights }))
    }

    pub fn discrete_delta(step: f64) -> Result<Self> {
        ensure_positive("step", step)?;
        Ok(Self::DiscreteDelta { step })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Sinc { w } => 2.0 * w * sin_over(2.0 * PI * w * t),
            Self::Squared { w } => {
                let r = 2.0 * w * sin_over(2.0 * PI * w * t);
                r * r / (2.0 * w)
            }
            Self::Power(p) => {
                let rho = sin_over(2.0 * PI * p.w * t);
                p.weights.iter().map(|&(k, a)| a * rho.powi(k as i32)).sum()
            }
            Self::DiscreteDelta { step } => {
                if t.abs() < 0.5 * step {
                    1.0 / step
                } else {
                    0.0
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.eval(0.0)
    }

    /// Time scale below which the kernel is concentrated.
    fn width(&self) -> f64 {
        match self {
            Self::Sinc { w } | Self::Squared { w } => 1.0 / (2.0 * w),
            Self::Power(p) => 1.0 / (2.0 * p.w),
            Self::DiscreteDelta { step } => *step,
        }
    }

    /// Bound on `∫_{|u| > d} |K(u)| du` from the `1/(π|u|)` envelope of `R_W`.
    /// Infinite for kernels whose envelope is not integrable.
    pub fn tail_mass(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return f64::INFINITY;
        }
        let envelope = |w: f64, k: i32, a: f64| {
            // a ρ^k with |ρ| <= 1/(2πW|u|); two-sided integral of the envelope.
            if k <= 1 {
                f64::INFINITY
            } else {
                let c = 1.0 / (2.0 * PI * w);
                2.0 * a * c.powi(k) / ((f64::from(k) - 1.0) * d.powi(k - 1))
            }
        };
        match self {
            Self::Sinc { .. } => f64::INFINITY,
            Self::Squared { w } => envelope(*w, 2, 2.0 * w),
            Self::Power(p) => p
                .weights
                .iter()
                .map(|&(k, a)| envelope(p.w, k as i32, a))
                .sum(),
            Self::DiscreteDelta { step } => {
                if d > 0.5 * step {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Minimum clearance, in kernel widths, between the evaluation grid and the
/// edge of the input function's grid.
const MIN_CLEARANCE_WIDTHS: f64 = 4.0;

/// `g(t) = ∫ K(t - s) f(s) ds` by composite trapezoid on `f`'s grid,
/// evaluated on `eval_grid`.
pub fn kernel_action(
    kernel: &CovarianceKernel,
    f: &TestFunction,
    eval_grid: &SampleGrid,
) -> Result<TestFunction> {
    let fg = f.grid();
    let left = eval_grid.start() - fg.start();
    let right = fg.end() - eval_grid.end();
    let clearance = left.min(right);
    let needed = MIN_CLEARANCE_WIDTHS * kernel.width();
    if clearance < needed {
        let fmax = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        return Err(Error::InsufficientPadding {
            reason: format!(
                "evaluation grid is {clearance:.4e} from the edge of the input grid, need {needed:.4e}"
            ),
            bound: fmax * kernel.tail_mass(clearance.max(0.0)),
        });
    }

    let weights = trapezoid_weights(fg.count(), fg.step());
    let wf: Vec<f64> = weights.iter().zip(f.values()).map(|(w, v)| w * v).collect();

    let aligned_offset = fg.aligned_offset(eval_grid);
    let out: Vec<f64> = match aligned_offset {
        Some(offset) => {
            // Toeplitz fast path: K((i + offset - j) h) depends only on the lag.
            let n = fg.count() as i64;
            let h = fg.step();
            let lags: Vec<f64> = (0..n).map(|lag| kernel.eval(lag as f64 * h)).collect();
            (0..eval_grid.count() as i64)
                .map(|i| {
                    let center = i + offset;
                    wf.iter()
                        .enumerate()
                        .map(|(j, &v)| v * lags[(center - j as i64).unsigned_abs() as usize])
                        .sum()
                })
                .collect()
        }
        None => (0..eval_grid.count())
            .map(|i| {
                let t = eval_grid.time(i);
                wf.iter()
                    .enumerate()
                    .map(|(j, &v)| v * kernel.eval(t - fg.time(j)))
                    .sum()
            })
            .collect(),
    };
    TestFunction::new(eval_grid.clone(), out)
}

/// `∫∫ K(t - s) f(t) g(s) dt ds` with both integrals by trapezoid on the
/// functions' own grids. This is the exact finite-W covariance of the
/// functionals `[Z, f]` and `[Z, g]` when `K` is the covariance of `Z`.
pub fn bilinear_form(kernel: &CovarianceKernel, f: &TestFunction, g: &TestFunction) -> f64 {
    let (fg, gg) = (f.grid(), g.grid());
    let wf = trapezoid_weights(fg.count(), fg.step());
    let wg = trapezoid_weights(gg.count(), gg.step());
    let mut total = 0.0;
    for (i, (&a, &fv)) in wf.iter().zip(f.values()).enumerate() {
        let t = fg.time(i);
        let row: f64 = wg
            .iter()
            .zip(g.values())
            .enumerate()
            .map(|(j, (&b, &gv))| b * gv * kernel.eval(t - gg.time(j)))
            .sum();
        total += a * fv * row;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn sinc_cov_values() {
        assert_eq!(sinc_cov(1.0, 0.0).unwrap(), 2.0);
        assert!(sinc_cov(1.0, 0.5).unwrap().abs() < 1e-15);
        assert!(rel(sinc_cov(1.0, 0.25).unwrap(), 4.0 / PI) < 1e-15);
    }

    #[test]
    fn sinc_series_branch_is_continuous() {
        let w = 3.0;
        let t = SINC_SERIES_CUTOFF / (2.0 * PI * w);
        let below = sinc_cov(w, t * (1.0 - 1e-9)).unwrap();
        let above = sinc_cov(w, t * (1.0 + 1e-9)).unwrap();
        assert!(rel(below, above) < 1e-12);
        assert!(sinc_cov(w, 1e-300).unwrap() == 2.0 * w);
    }

    #[test]
    fn non_finite_time_rejected() {
        assert!(sinc_cov(1.0, f64::NAN).is_err());
        assert!(squared_cov(1.0, f64::INFINITY).is_err());
        assert!(sinc_cov(0.0, 1.0).is_err());
    }

    #[test]
    fn squared_cov_values() {
        assert_eq!(squared_cov(1.0, 0.0).unwrap(), 2.0);
        assert!(squared_cov(1.0, 0.5).unwrap() < 1e-30);
        assert!(squared_cov(1.0, 0.37).unwrap() >= 0.0);
    }

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial(0).unwrap(), 1);
        assert_eq!(double_factorial(1).unwrap(), 1);
        assert_eq!(double_factorial(5).unwrap(), 15);
        assert_eq!(double_factorial(7).unwrap(), 105);
        assert!(matches!(double_factorial(60), Err(Error::Overflow(_))));
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_moment(4, 1.0).unwrap(), 3.0);
        assert_eq!(gaussian_moment(3, 1.0).unwrap(), 0.0);
        assert_eq!(gaussian_moment(4, 2.0).unwrap(), 12.0);
        assert_eq!(gaussian_moment(0, 5.0).unwrap(), 1.0);
        assert!(gaussian_moment(-1, 1.0).is_err());
        assert!(gaussian_moment(2, 0.0).is_err());
    }

    #[test]
    fn hermite_small_orders() {
        let h1 = hermite_coeffs(1).unwrap();
        assert_eq!(h1.terms().collect::<Vec<_>>(), vec![(1, 1)]);
        let h2 = hermite_coeffs(2).unwrap();
        assert_eq!(h2.terms().collect::<Vec<_>>(), vec![(2, 1), (0, 1)]);
        let h3 = hermite_coeffs(3).unwrap();
        assert_eq!(h3.terms().collect::<Vec<_>>(), vec![(3, 1), (1, 3)]);
        let h4 = hermite_coeffs(4).unwrap();
        assert_eq!(h4.terms().collect::<Vec<_>>(), vec![(4, 1), (2, 6), (0, 3)]);
        assert!(hermite_coeffs(0).is_err());
        assert!(hermite_coeffs(21).is_err());
        assert!(hermite_coeffs(20).is_ok());
    }

    #[test]
    fn hermite_identity() {
        for n in 1..=10 {
            let e = hermite_coeffs(n).unwrap();
            assert_eq!(e.coeff(n), 1);
            for x in [-2.0f64, -1.0, 0.0, 0.5, 1.0, 3.0] {
                let want = x.powi(n as i32);
                let got = e.eval(x);
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                    "n={n} x={x}"
                );
            }
        }
    }

    #[test]
    fn wick_oracle_closed_forms() {
        for rho in [-1.0, -0.5, 0.0, 0.3, 0.99, 1.0] {
            assert!((wick_cov_oracle(1, rho, 1.0).unwrap() - rho).abs() < 1e-15);
            assert!((wick_cov_oracle(2, rho, 1.0).unwrap() - 2.0 * rho * rho).abs() < 1e-14);
            let want3 = 9.0 * rho + 6.0 * rho.powi(3);
            assert!((wick_cov_oracle(3, rho, 1.0).unwrap() - want3).abs() < 1e-13);
        }
        assert!(wick_cov_oracle(2, 1.5, 1.0).is_err());
        assert!(wick_cov_oracle(7, 0.5, 1.0).is_err());
    }

    #[test]
    fn power_cov_examples() {
        let w = 3.0;
        assert!(rel(power_cov(2, w, 0.0).unwrap(), 2.0 * (2.0 * w).powi(2)) < 1e-14);
        for n in 1..=5 {
            for k in [1.0, 2.0, -3.0] {
                assert!(power_cov(n, w, k / (2.0 * w)).unwrap().abs() < 1e-9);
            }
        }
        let rho = 2.0 / PI;
        let want = 8.0 * (9.0 * rho + 6.0 * rho.powi(3));
        assert!(rel(power_cov(3, 1.0, 0.25).unwrap(), want) < 1e-14);
        assert!((want - 58.219).abs() < 5e-3);
    }

    #[test]
    fn power_scale_matches_square_normalization() {
        for w in [0.5, 1.0, 64.0, 1000.0] {
            assert!(rel(power_scale(2, w).unwrap(), 2.0 * w.sqrt()) < 1e-15);
        }
    }

    #[test]
    fn conditional_decomposition_examples() {
        assert_eq!(conditional_decomposition(5.0, 0.0).unwrap(), (1.0, 0.0));
        let (a, v) = conditional_decomposition(2.0, 0.25).unwrap();
        assert!(a.abs() < 1e-15);
        assert!((v - 4.0).abs() < 1e-14);
        let (a, v) = conditional_decomposition(1.0, 0.25).unwrap();
        assert!(rel(a, 2.0 / PI) < 1e-15);
        assert!(rel(v, 2.0 - 8.0 / (PI * PI)) < 1e-14);
    }

    #[test]
    fn sinc_power_integrals_match_tables() {
        let table = [
            (1, PI),
            (2, PI),
            (3, 3.0 * PI / 4.0),
            (4, 2.0 * PI / 3.0),
            (5, 115.0 * PI / 192.0),
            (6, 11.0 * PI / 20.0),
        ];
        for (k, want) in table {
            let j = sinc_power_integral(k).unwrap();
            assert!(j.error <= 1e-8);
            assert!(
                (j.value - want).abs() <= 1e-8,
                "J_{k} = {} vs {want}",
                j.value
            );
        }
    }

    #[test]
    fn intensity_constants() {
        assert!((intensity_constant(1).unwrap() - 0.5).abs() < 1e-8);
        assert!((intensity_constant(2).unwrap() - 1.0).abs() < 1e-8);
        assert!((intensity_constant(3).unwrap() - 27.0 / 8.0).abs() < 1e-8);
        assert!((intensity_constant(4).unwrap() - 44.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn polynomial_intensities() {
        let w = 64.0;
        let monomial = polynomial_intensity(&[0.0, 0.0, 1.0], w).unwrap();
        assert!((monomial - 27.0 / 8.0).abs() < 1e-8);
        let mixed = polynomial_intensity(&[1.0, 1.0], w).unwrap();
        assert!((mixed - (1.0 + 1.0 / (4.0 * w))).abs() < 1e-8);
        let hermite = polynomial_intensity(&[-3.0 * 2.0 * w, 0.0, 1.0], w).unwrap();
        assert!((hermite - 9.0 / 8.0).abs() < 1e-8);
    }

    #[test]
    fn renormalized_square_kernel_is_squared_cov() {
        let w = 7.5;
        let a = CovarianceKernel::renormalized_power(2, w).unwrap();
        let b = CovarianceKernel::squared(w).unwrap();
        for t in [0.0, 0.01, 0.13, -0.4, 2.0] {
            assert!((a.eval(t) - b.eval(t)).abs() <= 1e-12 * b.eval(0.0));
        }
    }

    #[test]
    fn kernels_are_even_and_bounded() {
        let kernels = [
            CovarianceKernel::sinc(3.0).unwrap(),
            CovarianceKernel::squared(3.0).unwrap(),
            CovarianceKernel::power(3, 3.0).unwrap(),
            CovarianceKernel::renormalized_power(4, 3.0).unwrap(),
            CovarianceKernel::discrete_delta(0.1).unwrap(),
        ];
        for k in &kernels {
            for t in [0.0, 0.011, 0.2, 1.7, 13.3] {
                assert_eq!(k.eval(t), k.eval(-t));
                assert!(k.eval(t).abs() <= k.variance() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn kernel_action_delta_and_zero() {
        let grid = SampleGrid::new(-2.0, 0.01, 401).unwrap();
        let f = TestFunction::from_fn(grid.clone(), |t| (-t * t).exp());
        let inner = SampleGrid::new(-1.0, 0.01, 201).unwrap();
        let delta = CovarianceKernel::discrete_delta(0.01).unwrap();
        let g = kernel_action(&delta, &f, &inner).unwrap();
        for (i, v) in g.values().iter().enumerate() {
            assert!((v - f.values()[i + 100]).abs() < 1e-12);
        }
        let zero = TestFunction::from_fn(grid, |_| 0.0);
        let g0 = kernel_action(&CovarianceKernel::squared(4.0).unwrap(), &zero, &inner).unwrap();
        assert!(g0.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_action_reports_padding() {
        let grid = SampleGrid::new(0.0, 0.01, 101).unwrap();
        let f = TestFunction::from_fn(grid.clone(), |_| 1.0);
        let err = kernel_action(&CovarianceKernel::squared(4.0).unwrap(), &f, &grid).unwrap_err();
        assert!(matches!(err, Error::InsufficientPadding { .. }));
    }
}
