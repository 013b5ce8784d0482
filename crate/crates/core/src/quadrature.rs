//! Numerical integration helpers shared by the kernel calculus and the
//! grid-based inner products.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

/// Result of an adaptive integration: value plus the summed Kronrod error
/// estimate over all accepted panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive 15-point Gauss–Kronrod quadrature on `[a, b]`.
///
/// Panels are bisected until each one's error estimate is below its share of
/// `abs_tol`. Fails instead of returning a truncated answer when the depth
/// limit is hit.
pub fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::invalid(
            "interval",
            format!("[{a}, {b}] is not a finite interval"),
        ));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut acc = Integral {
        value: 0.0,
        error: 0.0,
    };
    let mut stack = vec![(a, b, abs_tol, 0u32)];
    while let Some((lo, hi, tol, depth)) = stack.pop() {
        let (value, error) = gauss_kronrod(f, lo, hi);
        if !value.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        if error <= tol || error <= 1e-15 * value.abs() {
            acc.value += value;
            acc.error += error;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Quadrature(format!(
                "panel [{lo:.6e}, {hi:.6e}] still has error {error:.3e} > {tol:.3e} after {MAX_DEPTH} bisections"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, 0.5 * tol, depth + 1));
            stack.push((lo, mid, 0.5 * tol, depth + 1));
        }
    }
    Ok(acc)
}

/// Composite trapezoid weights for `count` equally spaced nodes.
pub fn trapezoid_weights(count: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; count];
    if count == 1 {
        w[0] = 0.0;
    } else if count > 1 {
        w[0] = 0.5 * step;
        w[count - 1] = 0.5 * step;
    }
    w
}

/// Composite trapezoid sum of equally spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}
