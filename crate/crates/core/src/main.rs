use std::path::PathBuf;

use clap::Parser;

use wnlab::harness::run_cli;

/// Monte Carlo checks that renormalized powers of band-limited Gaussian
/// noise converge to white noise.
///
/// Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 configuration
/// error, 3 runtime or numeric error.
#[derive(Debug, Parser)]
#[command(name = "wnlab", version)]
struct Cli {
    /// kernel-check, whiteness, char-functional, independence, power-sweep or poly
    experiment: String,
    /// Flat key=value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated bandwidths
    #[arg(long = "W", allow_hyphen_values = true)]
    w: Option<String>,
    /// Power (degree of the transform)
    #[arg(long = "n", allow_hyphen_values = true)]
    n: Option<String>,
    /// Monte Carlo replications
    #[arg(long = "M", allow_hyphen_values = true)]
    m: Option<String>,
    /// Horizon
    #[arg(long = "T", allow_hyphen_values = true)]
    t: Option<String>,
    /// Basis size
    #[arg(long = "N", allow_hyphen_values = true)]
    basis_size: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Worker threads (0 = all cores); never changes results
    #[arg(long, allow_hyphen_values = true)]
    workers: Option<String>,
    /// Output path, `-` for stdout
    #[arg(long)]
    out: Option<String>,
    /// csv, json or both
    #[arg(long)]
    format: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    oversample: Option<String>,
    #[arg(long = "pad-taps", allow_hyphen_values = true)]
    pad_taps: Option<String>,
    /// fft or sinc_interp
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    basis: Option<String>,
    /// basis:K, const or probe:t1,t2,...
    #[arg(long = "test-function")]
    test_function: Option<String>,
    /// Polynomial coefficients c_1..c_n (poly only)
    #[arg(long, allow_hyphen_values = true)]
    coeffs: Option<String>,
}

impl Cli {
    fn overrides(self) -> (Option<PathBuf>, Vec<(String, String)>) {
        let flags = [
            ("experiment", Some(self.experiment)),
            ("W", self.w),
            ("n", self.n),
            ("M", self.m),
            ("T", self.t),
            ("N", self.basis_size),
            ("seed", self.seed),
            ("workers", self.workers),
            ("out", self.out),
            ("format", self.format),
            ("oversample", self.oversample),
            ("pad_taps", self.pad_taps),
            ("method", self.method),
            ("basis", self.basis),
            ("test_function", self.test_function),
            ("coeffs", self.coeffs),
        ];
        let pairs = flags
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
        (self.config, pairs)
    }
}

fn main() {
    let (config, overrides) = Cli::parse().overrides();
    let code = run_cli(
        config.as_deref(),
        &overrides,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
