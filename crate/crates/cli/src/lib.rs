//! Command-line front end: loads a game (spec file or built-in scenario),
//! runs the solvers and writes CSV, JSON and SVG artifacts.

pub mod commands;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mfg_evo::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mfg-evo", version, about = "Mean field games under evolutionary revision dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct CommonArgs {
    /// Game spec file (JSON or TOML).
    #[arg(long, conflicts_with = "scenario")]
    pub spec: Option<PathBuf>,
    /// Built-in scenario: mac, random-congestion or random-generic.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Integration tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Timescale ratio override; state rates are rescaled to reach it.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    /// Number of sample times.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub plots: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum PiArg {
    StateAction,
    Action,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum JacobianArg {
    Auto,
    Analytic,
    FiniteDifference,
}

impl From<JacobianArg> for mfg_evo::stability::JacobianMode {
    fn from(j: JacobianArg) -> Self {
        match j {
            JacobianArg::Auto => Self::Auto,
            JacobianArg::Analytic => Self::Analytic,
            JacobianArg::FiniteDifference => Self::FiniteDifference,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum FormatArg {
    Json,
    Toml,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the master equation; writes trajectory.csv, xz.csv, meta.json and plot.svg.
    SimulateMf {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Multi-start rest-point search; writes equilibria.json.
    FindMsne {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 8)]
        starts: usize,
    },
    /// Equilibrium set and stability certificate; writes certificate.json.
    CheckEss {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated policy masses to certify instead of searching.
        #[arg(long = "x-star", value_delimiter = ',')]
        x_star: Option<Vec<f64>>,
        /// Certify the game with every reward multiplied by -1.
        #[arg(long)]
        negate_payoff: bool,
        /// Reward-shaping map; defaults to the action marginal when every
        /// reward depends on actions only.
        #[arg(long, value_enum)]
        pi: Option<PiArg>,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, value_enum, default_value = "auto")]
        jacobian: JacobianArg,
    },
    /// Finite-population simulation; writes empirical.csv, kl.csv and finite.json.
    SimulateFinite {
        #[command(flatten)]
        common: CommonArgs,
        /// Population sizes (comma-separated).
        #[arg(long, value_delimiter = ',', default_value = "100,1000")]
        n: Vec<usize>,
    },
    /// End-to-end run on the multiple-access scenario.
    MacDemo {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        n: Vec<usize>,
    },
    /// Writes policy chains, the reward-shaping map and decomposition matrices to matrices.json.
    DumpMatrices {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Writes the selected game as a spec file.
    EmitScenario {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
}

/// Caps the worker pool from `MFG_EVO_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MFG_EVO_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Usage(format!("MFG_EVO_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(CliError::Usage("MFG_EVO_THREADS must be positive".into()));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command; returns the files written.
pub fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    configure_threads()?;
    match cli.command {
        Command::SimulateMf { common } => commands::simulate_mf(&common),
        Command::FindMsne { common, starts } => commands::find_msne(&common, starts),
        Command::CheckEss {
            common,
            x_star,
            negate_payoff,
            pi,
            starts,
            jacobian,
        } => commands::check_ess(&common, x_star.as_deref(), negate_payoff, pi, starts, jacobian.into()),
        Command::SimulateFinite { common, n } => commands::simulate_finite(&common, &n),
        Command::MacDemo { common, n } => commands::mac_demo(&common, &n),
        Command::DumpMatrices { common } => commands::dump_matrices(&common),
        Command::EmitScenario { common, format } => commands::emit_scenario(&common, format),
    }
}
