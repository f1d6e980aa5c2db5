//! `forced-sn`: bounding graphs, critical parameters, sweeps, Lyapunov
//! exponents, oracle values and flow-induced maps from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BetaGrid, Format, RunConfig};

/// Failures, by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Core(forced_sn::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use forced_sn::Error as E;
        match self {
            Failure::Config(_) => 2,
            Failure::Core(e) => match e {
                E::Config(_) | E::Io(_) | E::Json(_) => 2,
                E::PreconditionFailed(_)
                | E::GraphEscaped { .. }
                | E::MismatchedFields(_)
                | E::NotInvariant
                | E::Domain(_)
                | E::ValidationFailed(_) => 3,
                E::NoBracket(_) | E::Blowup { .. } | E::Numerical(_) => 4,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<forced_sn::Error> for Failure {
    fn from(e: forced_sn::Error) -> Self {
        Failure::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "forced-sn", version, about = "Invariant graphs and saddle-node bifurcations of forced monotone interval maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Number of θ samples
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Fixed pullback depth (adaptive when omitted)
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Bisection tolerance in β
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for low-discrepancy sample placement
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample placement: grid or low_discrepancy
    #[arg(long, global = true)]
    placement: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Lower and upper bounding graphs at one β, plus a pinching report
    Graphs,
    /// Critical parameter by bisection
    Betac {
        /// Restrict to the invariant subset M1 or M2 of the torus base
        #[arg(long)]
        restrict: Option<String>,
        /// Compute the last bifurcation parameter instead
        #[arg(long)]
        last: bool,
    },
    /// Bifurcation-diagram sweep over a β grid
    Sweep {
        /// start:stop:count
        #[arg(long)]
        beta_grid: Option<BetaGrid>,
    },
    /// Lyapunov exponents of both bounding graphs
    Lyap {
        /// Base point of the averaging orbit, comma separated
        #[arg(long, value_delimiter = ',')]
        theta0: Option<Vec<f64>>,
        /// Averaging length
        #[arg(long)]
        n: Option<usize>,
    },
    /// Closed-form and Newton saddle-node values
    Oracle {
        /// Constant offset of arctan(αx) − 2β − offset
        #[arg(long, allow_hyphen_values = true)]
        offset: Option<f64>,
    },
    /// Samples of the time-t₀ map of the configured flow
    Flowmap {
        /// Number of x values across Γ per θ sample
        #[arg(long)]
        x_points: Option<usize>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    let c = &cli.common;
    if c.beta.is_some() {
        cfg.beta = c.beta;
    }
    if c.samples.is_some() {
        cfg.samples = c.samples;
    }
    if c.depth.is_some() {
        cfg.depth = c.depth;
    }
    if c.tol.is_some() {
        cfg.tol = c.tol;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if c.format.is_some() {
        cfg.format = c.format;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = &c.placement {
        cfg.placement = serde_json::from_value(serde_json::Value::String(p.clone()))
            .map_err(|_| Failure::Config(format!("unknown placement {p:?}; expected grid or low_discrepancy")))?;
    }
    match &cli.cmd {
        Cmd::Betac { restrict, last } => {
            if restrict.is_some() {
                cfg.restrict = restrict.clone();
            }
            cfg.last |= *last;
        }
        Cmd::Sweep { beta_grid } => {
            if beta_grid.is_some() {
                cfg.beta_grid = *beta_grid;
            }
        }
        Cmd::Lyap { theta0, n } => {
            if theta0.is_some() {
                cfg.theta0 = theta0.clone();
            }
            if n.is_some() {
                cfg.lyap_n = *n;
            }
        }
        Cmd::Oracle { offset } => {
            if offset.is_some() {
                cfg.offset = *offset;
            }
        }
        Cmd::Flowmap { x_points } => {
            if x_points.is_some() {
                cfg.x_points = *x_points;
            }
        }
        Cmd::Graphs => {}
    }
    cfg.resolve()
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let cfg = build_config(&cli)?;
    match cli.cmd {
        Cmd::Graphs => commands::graphs(cfg),
        Cmd::Betac { .. } => commands::betac(cfg),
        Cmd::Sweep { .. } => commands::sweep(cfg),
        Cmd::Lyap { .. } => commands::lyap(cfg),
        Cmd::Oracle { .. } => commands::oracle(cfg),
        Cmd::Flowmap { .. } => commands::flowmap(cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
