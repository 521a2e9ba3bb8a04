//! The `fcsched` command line.
//!
//! | exit | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | certification found violations |
//! | 2 | unreadable or invalid input |
//! | 3 | infeasible |
//! | 4 | limit reached without an incumbent |
//! | 10 | internal error |

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fcsched::freqdyn::DisturbanceRule;
use fcsched::sched::CaseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    CertifyFailed = 1,
    Input = 2,
    Infeasible = 3,
    NoIncumbent = 4,
    Internal = 10,
}

#[derive(Debug)]
pub struct Failure {
    pub code: ExitCode,
    pub message: String,
}

impl Failure {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Input, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Internal, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "fcsched", version, about = "Frequency-constrained microgrid scheduling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and solve a schedule, writing the solution and reports.
    Solve(SolveArgs),
    /// Check a solved schedule against the swing dynamics by simulation.
    Certify(CertifyArgs),
    /// Frequency metrics of a single scene.
    Freq(FreqArgs),
    /// Solve once per value of one scalar and tabulate average cost.
    Sweep(SweepArgs),
    /// Check a case (and optionally scenarios) without solving.
    Validate(ValidateArgs),
}

/// Inputs shared by every command that needs a case and scenarios.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub case: Option<PathBuf>,
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep only the first N periods.
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub case_mode: Option<CaseMode>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Relative optimality gap.
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Sequential, reproducible search.
    #[arg(long)]
    pub deterministic: bool,
}

fn parse_mode(s: &str) -> Result<CaseMode, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Mean,
    Robust,
    NoShedding,
}

impl From<RuleArg> for DisturbanceRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Mean => DisturbanceRule::Mean,
            RuleArg::Robust => DisturbanceRule::Robust,
            RuleArg::NoShedding => DisturbanceRule::NoShedding,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Solution dump written by `solve`.
    #[arg(long)]
    pub solution: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Allowed nadir overshoot (Hz).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FreqArgs {
    /// Synchronous inertia (MWs/Hz).
    #[arg(long = "H")]
    pub h: f64,
    /// Primary response delivered by Td (MW).
    #[arg(long = "R")]
    pub r: f64,
    /// PFR delivery time (s).
    #[arg(long = "Td", default_value_t = 10.0)]
    pub t_d: f64,
    /// Load damping (MW/Hz).
    #[arg(long = "D")]
    pub d: f64,
    /// Disturbance (MW).
    #[arg(long = "dPL")]
    pub dpl: f64,
    /// Storage synthetic inertia (MWs/Hz).
    #[arg(long = "Hsb", default_value_t = 0.0)]
    pub h_storage: f64,
    /// Wind synthetic inertia, one value per unit.
    #[arg(long = "Hsw", value_delimiter = ',')]
    pub h_wind: Vec<f64>,
    /// Damping penalty per wind unit.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    /// Post-nadir constant storage power (MW).
    #[arg(long = "dPC", default_value_t = 0.0)]
    pub dpc: f64,
    /// How long the constant power is held (s).
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    /// Write the simulated trajectory as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Scale of wind, PV and storage capacity.
    IbgScale,
    Alpha,
    Eta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::IbgScale => "ibg-scale",
            SweepParam::Alpha => "alpha",
            SweepParam::Eta => "eta",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Modes to sweep; defaults to the configured one.
    #[arg(long = "mode", value_parser = parse_mode)]
    pub modes: Vec<CaseMode>,
    /// Sweep points solved at once.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::Input as i32
            } else {
                0
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::Freq(a) => commands::freq(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Validate(a) => commands::validate(&a),
    };
    match result {
        Ok(code) => code as i32,
        Err(f) => {
            eprintln!("error: {f}");
            f.code as i32
        }
    }
}
