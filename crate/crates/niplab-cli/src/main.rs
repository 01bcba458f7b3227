use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use niplab::NipError;

mod commands;
mod config;
mod output;

use output::Format;

/// Exit status: 0 pass, 1 claim check failed, 2 invalid configuration, 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "niplab", version, about = "Spectra, metrics and interaction-picture evolution for wrong-sign quartic oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lowest eigenvalues of one model operator.
    Spectrum(SpectrumArgs),
    /// Match the spectra of an isospectral pair.
    Isospectral(IsospectralArgs),
    /// Quasi-Hermiticity, positivity and Ω†Ω = Θ checks.
    MetricCheck(MetricArgs),
    /// Co-evolve ket and ketket and record the physical norm.
    Evolve(EvolveArgs),
    /// Coriolis finite-difference check, massless c₂ and σ constraints.
    FtVerify(FtArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Number of grid points.
    #[arg(long)]
    pub n: Option<usize>,
    /// Box half-width L (grid on [−L, L)).
    #[arg(long = "L")]
    pub l: Option<f64>,
    /// JSON document with default values for any flag, keyed by long flag name.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub j: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Coupling schedule g(t) for the njm models.
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<String>,
    /// Time at which g is evaluated.
    #[arg(long)]
    pub t: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// aho, aho-line, qtilde, bb, jm, jm-avatar, bg, bg-avatar, njm or njm-avatar.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub params: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Keep eigenvectors that sit on the box edges.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub tau_abs: Option<f64>,
    #[arg(long)]
    pub tau_rel: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct IsospectralArgs {
    /// jm, bg, njm or aho-qtilde.
    #[arg(long)]
    pub pair: Option<String>,
    #[command(flatten)]
    pub params: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Tolerance is relative to |E|.
    #[arg(long)]
    pub relative: bool,
    /// bijective or subset; bg and aho-qtilde default to subset.
    #[arg(long)]
    pub mode: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// jm or njm.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub params: ModelArgs,
    /// closed-form or identity.
    #[arg(long)]
    pub theta: Option<String>,
    /// Exponent cap of the truncated metric.
    #[arg(long)]
    pub cap: Option<f64>,
    /// Dimension of the admissible subspace.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// njm.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<String>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Observable to record: H, G, X or P. Repeatable.
    #[arg(long)]
    pub observe: Vec<String>,
    /// reduced (default) or full.
    #[arg(long)]
    pub space: Option<String>,
    /// Size of the reduced eigenbasis.
    #[arg(long)]
    pub basis: Option<usize>,
    /// gaussian or eigen.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub center: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Abort once the relative norm drift exceeds this.
    #[arg(long)]
    pub abort_drift: Option<f64>,
    /// Pass threshold for the final drift.
    #[arg(long)]
    pub drift_tol: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct FtArgs {
    /// κ₀,κ₁,κ₂ of σ(t) = κ₀ + κ₁t + κ₂t².
    #[arg(long, allow_hyphen_values = true)]
    pub kappas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Largest finite-difference step; h/2 and h/4 are also used.
    #[arg(long)]
    pub fd: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// c₂ for the constraint evaluation; defaults to the massless value.
    #[arg(long, allow_hyphen_values = true)]
    pub c2: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(NipError),
}

impl From<NipError> for CliError {
    fn from(e: NipError) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e {
                NipError::InvalidConfig(_)
                | NipError::Domain(_)
                | NipError::Unsupported(_)
                | NipError::SingularPotential(_)
                | NipError::Derivative(_) => 2,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "invalid configuration: {s}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Isospectral(a) => commands::isospectral(a),
        Command::MetricCheck(a) => commands::metric_check(a),
        Command::Evolve(a) => commands::evolve(a),
        Command::FtVerify(a) => commands::ft_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("niplab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
