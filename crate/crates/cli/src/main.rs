//! `plchaos` command-line tool.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod parse;
mod reproduce;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use plchaos::integrate::IntegratorConfig;
use plchaos::{Param, SystemParams};

use crate::parse::{Grid, Pair, PairList, Params6, Range, Triple};

/// Error in the invocation itself rather than in the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "plchaos", version, about = "Numerical laboratory for a pseudo-linear chaotic system")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// System constants `a,b,c,h,r,omega`.
    #[arg(long)]
    pub params: Option<Params6>,
    /// Relative integration tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    /// Absolute integration tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    /// Output file; standard output if omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file with defaults for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    pub fn system(&self, default: [f64; 6]) -> anyhow::Result<SystemParams> {
        let p = SystemParams::from_slice(&self.params.map_or(default, |p| p.0));
        Ok(p.map_err(|e| UsageError(e.to_string()))?)
    }

    pub fn integrator(&self) -> anyhow::Result<IntegratorConfig> {
        let cfg = IntegratorConfig::with_tolerances(self.rtol, self.atol);
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifoldKind {
    /// One-dimensional unstable manifold of a saddle point of the return map.
    Map,
    /// Orbits on the two-dimensional unstable manifold of Z.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Both,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Region samples with NEValue signs.
    Table1,
    /// Orbits on the unstable manifold of Z.
    Fig3,
    /// Period-1 bifurcation diagram with its events.
    Fig4,
    /// Brute-force sweep through the period-doubling cascade.
    Fig5,
    /// Coexisting attractors and saddle unstable manifolds.
    Fig6,
    /// Feedback stabilisation run.
    Fig7,
    /// Master-slave synchronisation run.
    Fig8,
    All,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate a trajectory; CSV `t,x1,x2,x3`.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial state `x1,x2,x3`.
        #[arg(long, default_value = "0.1,0,0.1")]
        x0: Triple,
        /// Final time.
        #[arg(long = "T", default_value_t = 10.0)]
        t_end: f64,
        /// Output spacing; every accepted step if omitted.
        #[arg(long)]
        stride: Option<f64>,
    },
    /// Trajectory with the region of every sample; CSV `t,x1,x2,x3,region`.
    Regions {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0.1,0,0.1")]
        x0: Triple,
        #[arg(long = "T", default_value_t = 10.0)]
        t_end: f64,
        #[arg(long)]
        stride: Option<f64>,
        /// Write the region transitions as JSON to this file.
        #[arg(long)]
        transitions: Option<PathBuf>,
    },
    /// Equilibria, spectra, Hopf threshold and analytic orbit as JSON.
    Equilibria {
        #[command(flatten)]
        common: Common,
    },
    /// Iterate the return map; CSV `iter,x1,x3`.
    Poincare {
        #[command(flatten)]
        common: Common,
        /// Starting point `x1,x3` on the section.
        #[arg(long, default_value = "2.633,0.00129")]
        start: Pair,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
    },
    /// Newton search for a period-n point; JSON.
    Newton {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        start: Option<Pair>,
        #[arg(long, default_value_t = 1)]
        period: usize,
    },
    /// Pseudo-arclength continuation; branch CSV plus events JSON.
    Continue {
        #[command(flatten)]
        common: Common,
        /// Initial guess; the analytic orbit when omitted and `a = b`.
        #[arg(long)]
        start: Option<Pair>,
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Continuation parameter.
        #[arg(long, default_value = "a")]
        param: Param,
        #[arg(long, default_value = "1.0:1.3")]
        range: Range,
        #[arg(long, default_value_t = 1e-3)]
        h0: f64,
        #[arg(long, default_value_t = 1e-7)]
        h_min: f64,
        #[arg(long, default_value_t = 5e-3)]
        h_max: f64,
        /// Continue towards decreasing parameter values.
        #[arg(long)]
        backward: bool,
        /// Events JSON file; next to `--out` when omitted.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Brute-force bifurcation sweep; CSV `a,x1`.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid `lo:hi:steps`.
        #[arg(long, default_value = "1.197:1.205:1000")]
        a: Grid,
        /// Swept parameter.
        #[arg(long, default_value = "a")]
        param: Param,
        /// Seeds `x1,x3;x1,x3;...`.
        #[arg(long, default_value = "2.633,0.00129;3.203,0.03657")]
        seeds: PairList,
        #[arg(long, default_value_t = 600)]
        iterations: usize,
        #[arg(long, default_value_t = 100)]
        keep: usize,
    },
    /// Unstable manifolds; CSV `arc_index,x1,x3` or `seed,t,x1,x2,x3`.
    Manifold {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ManifoldKind::Map)]
        kind: ManifoldKind,
        /// Guess for the saddle point.
        #[arg(long, default_value = "3.199,0.0366")]
        start: Pair,
        #[arg(long, default_value_t = 1)]
        period: usize,
        #[arg(long, value_enum, default_value_t = Side::Both)]
        side: Side,
        /// Offset of the fundamental domain (map) or seed circle radius (equilibrium).
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        gap_max: f64,
        #[arg(long, default_value_t = 64)]
        n0: usize,
        #[arg(long, default_value_t = 8)]
        iters: usize,
        /// Number of orbits on the manifold of Z.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long = "T", default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.05)]
        stride: f64,
    },
    /// Closed loop with feedback `u = -K r^2 x3`; CSV `t,x1,x2,x3,u,lambda3cl`.
    Control {
        #[command(flatten)]
        common: Common,
        /// Gain K.
        #[arg(long, default_value_t = 1.1)]
        gain: f64,
        /// Initial state; by default the free system is first run for `--transient`.
        #[arg(long)]
        x0: Option<Triple>,
        #[arg(long, default_value_t = 20.0)]
        transient: f64,
        #[arg(long = "T", default_value_t = 50.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        stride: f64,
    },
    /// Master-slave synchronisation; CSV `t,e1,e2,e3,u1,u2,u3`.
    Sync {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xm0: Option<Triple>,
        #[arg(long)]
        xs0: Option<Triple>,
        /// Seed for the random initial states.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "T", default_value_t = 5.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        stride: f64,
        /// Integrate master and slave directly instead of master and error.
        #[arg(long)]
        direct: bool,
    },
    /// Largest Lyapunov exponent; JSON.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "2.633,0,0.00129")]
        x0: Triple,
        #[arg(long = "T", default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0)]
        renorm: f64,
        #[arg(long, default_value_t = 100.0)]
        transient: f64,
    },
    /// Regenerate the data behind a figure or table into `--out-dir`.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("PLCHAOS_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| UsageError(format!("PLCHAOS_THREADS must be a positive integer, got '{v}'")))?;
    // a second initialisation can only fail if a pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(args: Vec<OsString>) -> anyhow::Result<()> {
    init_threads()?;
    let args = config::merge_config(&Cli::command(), args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match cli.command {
        Command::Reproduce { figure, out_dir, seed, rtol, atol, .. } => {
            let cfg = IntegratorConfig::with_tolerances(rtol, atol);
            cfg.validate().map_err(|e| UsageError(e.to_string()))?;
            reproduce::reproduce(figure, &out_dir, seed, &cfg)
        }
        other => commands::dispatch(other),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
