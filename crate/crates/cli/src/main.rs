//! `netpot`: command-line front end for potential theory on rooted networks.

mod cache;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netpot::{Tolerances, VertexId};

#[derive(Parser, Debug)]
#[command(name = "netpot", version, about = "Green kernels, minimax potentials and h-transforms on rooted networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Result cache directory.
    #[arg(long, global = true, env = "NETPOT_CACHE")]
    pub cache_dir: Option<PathBuf>,
    /// Neither read nor write the result cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// Relative residual accepted from linear solves.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub solve_tol: f64,
    /// Tolerance for pointwise identities.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub identity_tol: f64,
    /// Accepted primal-dual gap, relative to max(1, value).
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub lp_gap: f64,
    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Global {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances { solve_residual: self.solve_tol, identity: self.identity_tol, lp_gap: self.lp_gap }
    }
}

fn label(s: &str) -> Result<VertexId, String> {
    s.parse().map_err(|e: netpot::Error| e.to_string())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Line,
    Grid2d,
    Tree,
    Ladder,
    RandomGrid,
    Random,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Mc,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a network file for a built-in family.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Edge conductance of the line.
        #[arg(long, default_value_t = 1.0)]
        conductance: f64,
        #[arg(long, default_value_t = 2)]
        branching: u32,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Conductance range of the random grid.
        #[arg(long, default_value_t = 0.5)]
        low: f64,
        #[arg(long, default_value_t = 2.0)]
        high: f64,
        /// Member of the random family.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 60)]
        vertices: usize,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Killed Green density g^(R)(x, y) along a radius schedule.
    Green {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_parser = label)]
        x: VertexId,
        #[arg(long, value_parser = label)]
        y: VertexId,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<usize>,
        /// Convergence threshold on the last delta.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dipole from the root to a vertex or a measure on B(o, R).
    Dipole {
        #[arg(long)]
        net: PathBuf,
        #[arg(long = "R")]
        big_r: usize,
        #[arg(long, value_parser = label, conflicts_with = "eta", required_unless_present = "eta")]
        y: Option<VertexId>,
        /// Target measure in netpot-measure-v1 format.
        #[arg(long)]
        eta: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the minimax problem M_R(r).
    Minimax {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long = "R")]
        big_r: usize,
        #[arg(long)]
        emit_psi: Option<PathBuf>,
        #[arg(long)]
        emit_eta: Option<PathBuf>,
        /// Summary JSON (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// M_R(r) for r = rmin, 2 rmin, ... up to rmax with R = ceil(ratio r).
    Mcurve {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        rmin: usize,
        #[arg(long)]
        rmax: usize,
        #[arg(long, default_value_t = 2.0)]
        ratio: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an escape potential from a level schedule.
    Escape {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        /// Schedule weights (default 2^-n).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100_000)]
        rmax: usize,
        #[arg(long, default_value_t = 2.0)]
        ratio: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Sublevel sets {h <= m} of a stored potential.
    Sublevel {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// P^h(h(Y_l) > M) for the h-transformed walk.
    Hsim {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long = "M")]
        level: f64,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Start vertex, or `initial` for the law mu_h.
        #[arg(long, default_value = "initial")]
        start: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Total variation between conditioned walks and the h-process.
    Tv {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long, value_delimiter = ',', value_parser = label)]
        targets: Vec<VertexId>,
        /// Measure targets in netpot-measure-v1 format, after the vertices.
        #[arg(long)]
        eta: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Effective resistance between the root and the sphere of B(o, R).
    Resistance {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant battery on a network.
    Verify {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Machine-readable report.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
