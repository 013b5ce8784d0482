//! Seedable sample paths of the flat band-limited Gaussian process.
//!
//! Two generators are provided and cross-check each other:
//!
//! * [`SynthMethod::SincInterp`]: iid `N(0, 2W)` values at the Nyquist times
//!   `k/(2W)` (exactly uncorrelated there) interpolated with a truncated sinc
//!   series. Exact in law up to truncation.
//! * [`SynthMethod::Fft`]: independent complex Gaussians on the in-band bins
//!   of a padded circular spectrum, inverse transformed and cropped.
//!
//! Randomness comes from [`RngStream`], a ChaCha8 counter-mode stream keyed by
//! `(seed, stream_id)`, so a path depends only on its configuration and
//! replication id.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::transform::PolySpec;

/// Uniform time grid `start + i * step`, `i < count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl SampleGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        ensure_finite("start", start)?;
        ensure_positive("step", step)?;
        if count == 0 {
            return Err(Error::invalid("count", "grid needs at least one point"));
        }
        Ok(Self { start, step, count })
    }

    /// Grid on `[a, b]` with the given step; `b - a` must be a whole number of steps.
    pub fn spanning(a: f64, b: f64, step: f64) -> Result<Self> {
        ensure_finite("a", a)?;
        ensure_finite("b", b)?;
        ensure_positive("step", step)?;
        if b < a {
            return Err(Error::invalid(
                "interval",
                format!("[{a}, {b}] is reversed"),
            ));
        }
        let cells = (b - a) / step;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 {
            return Err(Error::GridMismatch(format!(
                "[{a}, {b}] is not a whole number of steps of {step}"
            )));
        }
        Self::new(a, step, rounded as usize + 1)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.time(self.count - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.time(i))
    }

    /// Index of the grid node at `t`, if `t` is one (to 1e-6 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.start) / self.step;
        let r = x.round();
        if (x - r).abs() <= 1e-6 && r >= 0.0 && (r as usize) < self.count {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Offset (in steps) of `other.start` on this grid when both grids share
    /// the step and `other`'s nodes are nodes of this grid's lattice.
    pub fn aligned_offset(&self, other: &SampleGrid) -> Option<i64> {
        if (self.step - other.step).abs() > 1e-12 * self.step {
            return None;
        }
        let x = (other.start - self.start) / self.step;
        let r = x.round();
        ((x - r).abs() <= 1e-6).then_some(r as i64)
    }

    pub fn sub_grid(&self, a: f64, b: f64) -> Result<SampleGrid> {
        let i = self.index_of(a).ok_or_else(|| {
            Error::GridMismatch(format!(
                "{a} is not a node of the grid starting at {}",
                self.start
            ))
        })?;
        let j = self.index_of(b).ok_or_else(|| {
            Error::GridMismatch(format!(
                "{b} is not a node of the grid starting at {}",
                self.start
            ))
        })?;
        if j < i {
            return Err(Error::invalid(
                "interval",
                format!("[{a}, {b}] is reversed"),
            ));
        }
        SampleGrid::new(self.time(i), self.step, j - i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMethod {
    SincInterp,
    Fft,
}

impl fmt::Display for SynthMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthMethod::SincInterp => "sinc_interp",
            SynthMethod::Fft => "fft",
        })
    }
}

impl FromStr for SynthMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinc_interp" | "sinc" => Ok(SynthMethod::SincInterp),
            "fft" => Ok(SynthMethod::Fft),
            other => Err(Error::invalid(
                "method",
                format!("unknown method `{other}`"),
            )),
        }
    }
}

/// Everything needed to generate one path: bandwidth, horizon, grid
/// oversampling, padding and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub w: f64,
    pub horizon: f64,
    /// Grid step is `1/(2W * oversample)`.
    pub oversample: u32,
    /// Padding per side, in Nyquist intervals.
    pub pad_taps: u32,
    pub seed: u64,
    pub method: SynthMethod,
}

impl ProcessConfig {
    pub const DEFAULT_OVERSAMPLE: u32 = 4;
    pub const DEFAULT_PAD_TAPS: u32 = 64;

    pub fn new(w: f64, horizon: f64, seed: u64) -> Self {
        Self {
            w,
            horizon,
            oversample: Self::DEFAULT_OVERSAMPLE,
            pad_taps: Self::DEFAULT_PAD_TAPS,
            seed,
            method: SynthMethod::Fft,
        }
    }

    pub fn with_method(mut self, method: SynthMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_oversample(mut self, oversample: u32) -> Self {
        self.oversample = oversample;
        self
    }

    pub fn with_pad_taps(mut self, pad_taps: u32) -> Self {
        self.pad_taps = pad_taps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("W", self.w)?;
        ensure_positive("T", self.horizon)?;
        if self.oversample == 0 {
            return Err(Error::invalid("oversample", "must be >= 1"));
        }
        if self.pad_taps == 0 {
            return Err(Error::invalid("pad_taps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        1.0 / (2.0 * self.w * f64::from(self.oversample))
    }

    /// Grid on `[0, T]`; the last node is at or beyond `T`.
    pub fn horizon_grid(&self) -> Result<SampleGrid> {
        self.validate()?;
        let step = self.step();
        let cells = self.horizon / step;
        let whole = if (cells - cells.round()).abs() <= 1e-9 * cells.max(1.0) {
            cells.round()
        } else {
            cells.ceil()
        };
        SampleGrid::new(0.0, step, whole as usize + 1)
    }
}

/// What a [`SampledPath`] holds: the raw process or a transform of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Base,
    Power(u32),
    Polynomial(PolySpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub grid: SampleGrid,
    pub values: Vec<f64>,
    pub kind: PathKind,
    pub config: ProcessConfig,
    pub replication_id: u64,
}

impl SampledPath {
    pub fn new(
        grid: SampleGrid,
        values: Vec<f64>,
        kind: PathKind,
        config: ProcessConfig,
        replication_id: u64,
    ) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampled path".into()));
        }
        Ok(Self {
            grid,
            values,
            kind,
            config,
            replication_id,
        })
    }
}

/// Counter-based standard normal stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

/// Standard normal stream for `(seed, stream_id)`.
pub fn gaussian_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    RngStream {
        seed,
        stream_id,
        counter: 0,
        rng,
        spare: None,
    }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of normal deviates drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Next N(0, 1) deviate (Box–Muller, both outputs used).
    pub fn next_normal(&mut self) -> f64 {
        self.counter += 1;
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        let r = (-2.0 * libm::log(u1)).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}

impl Iterator for RngStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

/// Process values at the Nyquist times `k / (2W)`, `k = first, first + 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct NyquistSamples {
    pub w: f64,
    pub first: i64,
    pub values: Vec<f64>,
}

impl NyquistSamples {
    pub fn last(&self) -> i64 {
        self.first + self.values.len() as i64 - 1
    }
}

/// iid `N(0, 2W)` draws at every Nyquist time in `[a, b]` (rounded outward).
pub fn nyquist_samples(w: f64, span: (f64, f64), stream: &mut RngStream) -> Result<NyquistSamples> {
    ensure_positive("W", w)?;
    let (a, b) = span;
    ensure_finite("span.start", a)?;
    ensure_finite("span.end", b)?;
    if b <= a {
        return Err(Error::invalid("span", format!("[{a}, {b}] is empty")));
    }
    let rate = 2.0 * w;
    let first = (a * rate).floor() as i64;
    let last = (b * rate).ceil() as i64;
    let sd = rate.sqrt();
    let values = (first..=last).map(|_| sd * stream.next_normal()).collect();
    Ok(NyquistSamples { w, first, values })
}

/// Output of [`interpolate_sinc`].
#[derive(Debug, Clone, PartialEq)]
pub struct SincInterpolation {
    pub values: Vec<f64>,
    /// Largest relative variance deficit `1 - Σ_window sinc²` over the grid
    /// caused by truncating the series.
    pub max_variance_deficit: f64,
}

/// `x(t) = Σ_{|k - k0(t)| <= taps} s_k sinc(2Wt - k)`, `k0(t) = round(2Wt)`.
pub fn interpolate_sinc(
    samples: &NyquistSamples,
    grid: &SampleGrid,
    taps: u32,
) -> Result<SincInterpolation> {
    if taps == 0 {
        return Err(Error::invalid("taps", "must be >= 1"));
    }
    let rate = 2.0 * samples.w;
    let taps = i64::from(taps);
    let k_lo = (grid.start() * rate).round() as i64 - taps;
    let k_hi = (grid.end() * rate).round() as i64 + taps;
    if k_lo < samples.first || k_hi > samples.last() {
        let short = (samples.first - k_lo).max(k_hi - samples.last());
        return Err(Error::InsufficientPadding {
            reason: format!(
                "Nyquist samples cover k in [{}, {}], the grid needs [{k_lo}, {k_hi}]; \
                 pad_taps must be at least {} smaller or the samples {short} wider",
                samples.first,
                samples.last(),
                short
            ),
            bound: 2.0 / (PI * PI * (taps - short).max(1) as f64),
        });
    }

    let mut values = Vec::with_capacity(grid.count());
    let mut max_deficit = 0.0f64;
    for t in grid.times() {
        let u = t * rate;
        let k0 = u.round() as i64;
        let frac = u - k0 as f64;
        if frac.abs() < 1e-12 {
            values.push(samples.values[(k0 - samples.first) as usize]);
            continue;
        }
        // sin(π(u - k)) = (-1)^k sin(πu)
        let s = (PI * frac).sin();
        let mut acc = 0.0;
        let mut energy = 0.0;
        for k in (k0 - taps)..=(k0 + taps) {
            let d = u - k as f64;
            let sign = if (k - k0) % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * s / (PI * d);
            acc += c * samples.values[(k - samples.first) as usize];
            energy += c * c;
        }
        values.push(acc);
        max_deficit = max_deficit.max(1.0 - energy);
    }
    Ok(SincInterpolation {
        values,
        max_variance_deficit: max_deficit,
    })
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Spectral synthesis on a padded circular grid, cropped to `[0, T]`.
pub fn synth_fft(config: &ProcessConfig, stream: &mut RngStream) -> Result<SampledPath> {
    config.validate()?;
    if config.method != SynthMethod::Fft {
        return Err(Error::invalid("method", "synth_fft requires method = fft"));
    }
    let grid = config.horizon_grid()?;
    let step = grid.step();
    if step > 1.0 / (2.0 * config.w) * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "oversample",
            format!("grid step {step} is coarser than the Nyquist interval"),
        ));
    }
    let pad = config.pad_taps as usize * config.oversample as usize;
    let n = (grid.count() + 2 * pad).next_power_of_two();
    let bin = 1.0 / (n as f64 * step);
    let ratio = config.w / bin;
    let mut kmax = (ratio + 1e-9).floor() as usize;
    let on_edge = (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0);
    kmax = kmax.min(n / 2);

    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    let mut total = bin;
    spectrum[0] = Complex::new(bin.sqrt() * stream.next_normal(), 0.0);
    for k in 1..=kmax {
        let v = if on_edge && k == kmax { 0.5 * bin } else { bin };
        if k == n / 2 {
            spectrum[k] = Complex::new((2.0 * v).sqrt() * stream.next_normal(), 0.0);
        } else {
            let sd = (0.5 * v).sqrt();
            let re = sd * stream.next_normal();
            let im = sd * stream.next_normal();
            spectrum[k] = Complex::new(re, im);
            spectrum[n - k] = Complex::new(re, -im);
        }
        total += 2.0 * v;
    }
    let scale = (2.0 * config.w / total).sqrt();

    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut spectrum));
    let values = spectrum[pad..pad + grid.count()]
        .iter()
        .map(|c| scale * c.re)
        .collect();
    SampledPath::new(
        grid,
        values,
        PathKind::Base,
        config.clone(),
        stream.stream_id(),
    )
}

/// Sinc-interpolation path for `config`, drawing Nyquist samples from `stream`.
pub fn synth_sinc(config: &ProcessConfig, stream: &mut RngStream) -> Result<(SampledPath, f64)> {
    config.validate()?;
    let grid = config.horizon_grid()?;
    let margin = (f64::from(config.pad_taps) + 1.0) / (2.0 * config.w);
    let samples = nyquist_samples(
        config.w,
        (grid.start() - margin, grid.end() + margin),
        stream,
    )?;
    let interp = interpolate_sinc(&samples, &grid, config.pad_taps)?;
    let path = SampledPath::new(
        grid,
        interp.values,
        PathKind::Base,
        config.clone(),
        stream.stream_id(),
    )?;
    Ok((path, interp.max_variance_deficit))
}

/// Base path for replication `replication_id` (the RNG stream id).
pub fn make_path(config: &ProcessConfig, replication_id: u64) -> Result<SampledPath> {
    let mut stream = gaussian_stream(config.seed, replication_id);
    match config.method {
        SynthMethod::Fft => synth_fft(config, &mut stream),
        SynthMethod::SincInterp => synth_sinc(config, &mut stream).map(|(p, _)| p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_deterministic() {
        let a: Vec<u64> = gaussian_stream(7, 3).take(1000).map(f64::to_bits).collect();
        let b: Vec<u64> = gaussian_stream(7, 3).take(1000).map(f64::to_bits).collect();
        assert_eq!(a, b);
        let c: Vec<u64> = gaussian_stream(7, 4).take(1000).map(f64::to_bits).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn stream_counter_tracks_draws() {
        let mut s = gaussian_stream(1, 1);
        let mut buf = [0.0; 5];
        s.fill_normal(&mut buf);
        assert_eq!(s.counter(), 5);
    }

    #[test]
    fn stream_mean_and_independence() {
        let m = 100_000;
        let a: Vec<f64> = gaussian_stream(11, 0).take(m).collect();
        let b: Vec<f64> = gaussian_stream(11, 1).take(m).collect();
        let bound = 4.0 / (m as f64).sqrt();
        let mean = a.iter().sum::<f64>() / m as f64;
        assert!(mean.abs() <= bound);
        let ma = mean;
        let mb = b.iter().sum::<f64>() / m as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        assert!((sab / (saa * sbb).sqrt()).abs() <= bound);
    }

    #[test]
    fn nyquist_unit_variance_at_half_bandwidth() {
        let mut s = gaussian_stream(2, 0);
        let ns = nyquist_samples(0.5, (0.0, 20_000.0), &mut s).unwrap();
        let m = ns.values.len() as f64;
        let var = ns.values.iter().map(|v| v * v).sum::<f64>() / m;
        assert!((var - 1.0).abs() < 4.0 * (2.0 / m).sqrt());
    }

    #[test]
    fn nyquist_variance_and_lag_one() {
        let mut s = gaussian_stream(5, 9);
        let ns = nyquist_samples(4.0, (0.0, 1249.9), &mut s).unwrap();
        let v = &ns.values;
        assert!(v.len() >= 10_000);
        let m = v.len() as f64;
        let mean = v.iter().sum::<f64>() / m;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((0.94..=1.06).contains(&(var / 8.0)));
        let lag1 = v
            .windows(2)
            .map(|p| (p[0] - mean) * (p[1] - mean))
            .sum::<f64>()
            / (m - 1.0);
        assert!((lag1 / var).abs() <= 0.04);
    }

    #[test]
    fn empty_span_rejected() {
        let mut s = gaussian_stream(0, 0);
        assert!(nyquist_samples(1.0, (1.0, 1.0), &mut s).is_err());
    }

    #[test]
    fn sinc_interp_reproduces_nyquist_samples() {
        let w = 2.0;
        let mut s = gaussian_stream(3, 0);
        let ns = nyquist_samples(w, (-20.0, 21.0), &mut s).unwrap();
        let grid = SampleGrid::new(0.0, 1.0 / (2.0 * w), 9).unwrap();
        let out = interpolate_sinc(&ns, &grid, 32).unwrap();
        for (i, v) in out.values.iter().enumerate() {
            assert_eq!(*v, ns.values[(i as i64 - ns.first) as usize]);
        }
    }

    #[test]
    fn sinc_interp_deficit_shrinks_with_taps() {
        let w = 2.0;
        let mut s = gaussian_stream(3, 0);
        let ns = nyquist_samples(w, (-40.0, 41.0), &mut s).unwrap();
        // Midpoints between Nyquist times.
        let grid = SampleGrid::new(0.125, 0.25, 4).unwrap();
        let d32 = interpolate_sinc(&ns, &grid, 32)
            .unwrap()
            .max_variance_deficit;
        let d64 = interpolate_sinc(&ns, &grid, 64)
            .unwrap()
            .max_variance_deficit;
        assert!(d64 < d32);
        assert!(d64 > 0.0 && d64 < 0.005);
    }

    #[test]
    fn sinc_interp_rejects_short_padding() {
        let mut s = gaussian_stream(3, 0);
        let ns = nyquist_samples(2.0, (0.0, 1.0), &mut s).unwrap();
        let grid = SampleGrid::new(0.0, 0.125, 9).unwrap();
        assert!(matches!(
            interpolate_sinc(&ns, &grid, 8),
            Err(Error::InsufficientPadding { .. })
        ));
    }

    #[test]
    fn fft_path_is_real_and_on_horizon() {
        let cfg = ProcessConfig::new(8.0, 1.0, 1);
        let p = make_path(&cfg, 0).unwrap();
        assert_eq!(p.kind, PathKind::Base);
        assert_eq!(p.grid.count(), 65);
        assert!((p.grid.end() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fft_rejects_wrong_method() {
        let cfg = ProcessConfig::new(8.0, 1.0, 1).with_method(SynthMethod::SincInterp);
        assert!(synth_fft(&cfg, &mut gaussian_stream(0, 0)).is_err());
    }

    #[test]
    fn oversample_one_is_allowed() {
        let cfg = ProcessConfig::new(4.0, 1.0, 2).with_oversample(1);
        let p = make_path(&cfg, 3).unwrap();
        assert_eq!(p.grid.count(), 9);
    }

    #[test]
    fn make_path_is_deterministic() {
        for method in [SynthMethod::Fft, SynthMethod::SincInterp] {
            let cfg = ProcessConfig::new(4.0, 0.5, 99).with_method(method);
            assert_eq!(make_path(&cfg, 5).unwrap(), make_path(&cfg, 5).unwrap());
            assert_ne!(
                make_path(&cfg, 5).unwrap().values,
                make_path(&cfg, 6).unwrap().values
            );
        }
    }

    #[test]
    fn grid_helpers() {
        let g = SampleGrid::spanning(0.0, 1.0, 0.125).unwrap();
        assert_eq!(g.count(), 9);
        assert_eq!(g.index_of(0.375), Some(3));
        assert_eq!(g.index_of(0.3), None);
        let sub = g.sub_grid(0.25, 0.5).unwrap();
        assert_eq!(sub.count(), 3);
        assert_eq!(g.aligned_offset(&sub), Some(2));
        assert!(SampleGrid::spanning(0.0, 1.0, 0.3).is_err());
    }
}
