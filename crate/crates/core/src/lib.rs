//! Band-limited Gaussian processes with a flat spectrum, their centered and
//! renormalized powers, and Monte Carlo checks that those powers behave like
//! Gaussian white noise once the bandwidth is large.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: exact covariance calculus (sinc kernel, powers of it,
//!   Hermite/Wick bookkeeping, limiting intensity constants).
//! * [`synth`]: seedable sample-path generation, by Nyquist sampling plus
//!   sinc interpolation and by FFT spectral synthesis.
//! * [`transform`]: renormalized powers, homogeneous polynomials, test
//!   functions, inner products and projections.
//! * [`estimators`]: replicated Monte Carlo runs and the statistics that turn
//!   limit statements into finite-sample pass/fail reports.
//! * [`harness`]: configuration, experiment registry and report emission used
//!   by the `wnlab` binary.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod quadrature;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
