mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "nss-ortho",
    version,
    about = "Orthogonal NSS yield-curve fitting and diagnostics"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Input file (curve CSV for `fit`, history CSV for `treasury`, matrix CSV for `changepoint`).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub output_dir: PathBuf,
    /// Comma-separated tenor labels, e.g. 3M,6M,1Y,2Y.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tenors: Option<Vec<String>>,
    /// First date to keep (YYYY-MM-DD).
    #[arg(long, global = true)]
    pub from: Option<NaiveDate>,
    /// Last date to keep (YYYY-MM-DD).
    #[arg(long, global = true)]
    pub to: Option<NaiveDate>,
    /// Noise standard deviation in decimal yield units.
    #[arg(long, global = true, default_value_t = 5e-5)]
    pub sigma: f64,
    /// Tolerated parameter std for the R44 rule; defaults to 10 sigma.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Decay-parameter box as lo1,lo2,hi1,hi2.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = [0.02, 0.02, 5.0, 5.0])]
    pub lambda_box: Vec<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Model::Auto)]
    pub model: Model,
    /// Largest number of changepoints.
    #[arg(long, global = true, default_value_t = 12)]
    pub kmax: usize,
    /// Horizon T in years for the continuous basis.
    #[arg(long, global = true, default_value_t = 30.0)]
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ns,
    Nss,
    Auto,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Fit one curve and report covariance and identifiability.
    Fit {
        /// Yields in percent, matching --tenors (instead of --input).
        #[arg(long, value_delimiter = ',')]
        yields: Option<Vec<f64>>,
    },
    /// Conditioning table for the four lambda_2 cases.
    Table1,
    /// R44 sweep, condition-number map, basis and regime curves.
    Sweeps,
    /// Conditional (and optionally full) profile likelihoods.
    Profiles {
        /// Also compute full profiles of beta4 and gamma4 in the near-degenerate regime.
        #[arg(long)]
        full: bool,
    },
    /// Two-dimensional Delta NLL landscapes over (beta3, beta4) and (gamma3, gamma4).
    Landscape,
    /// Finite-horizon Gram matrix and continuous orthonormal basis.
    Gram {
        /// Decay parameters as l1,l2.
        #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.2])]
        lambda: Vec<f64>,
    },
    /// Daily calibration of a yield history, reports and monthly changepoints.
    Treasury {
        /// Simulate a history of this many business days instead of reading --input.
        #[arg(long)]
        synthetic_days: Option<usize>,
    },
    /// Exact changepoint segmentation of a CSV matrix.
    Changepoint {
        /// Segment the raw series instead of standardized columns.
        #[arg(long)]
        no_standardize: bool,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }

    pub fn fit(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<nss_ortho::NssError> for Failure {
    fn from(e: nss_ortho::NssError) -> Self {
        Failure::input(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::input(e)
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("NSS_ORTHO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("NSS_ORTHO_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::input)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
