//! `hybridskin`: build deformation graphs, skin meshes along node-transform
//! trajectories, fit trajectories to target meshes and evaluate energies.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridskin_core::Error;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hybridskin", version, about = "Deformation graphs and adaptive hybrid skinning")]
struct Cli {
    /// Run every parallel section on a single thread.
    #[arg(long, global = true)]
    serial: bool,

    /// `key = value` file supplying defaults for any option below.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More diagnostics on stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample control nodes and write the deformation graph as JSON.
    BuildGraph(BuildGraphArgs),
    /// Skin the mesh with every trajectory frame, writing frame_NNNN.obj.
    Deform(DeformArgs),
    /// Fit a trajectory to a directory of target OBJ frames.
    Fit(FitArgs),
    /// Print ARAP and normal-consistency energies of a deformed mesh.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub n_node: Option<usize>,
    #[arg(long)]
    pub n_neighbor: Option<usize>,
    /// geodesic or euclidean
    #[arg(long)]
    pub metric: Option<String>,
    /// Start vertex of farthest-point sampling (taken modulo the vertex count).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output graph JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// lbs, dqs or ahs
    #[arg(long)]
    pub mode: Option<String>,
    /// Bind this many Gaussians per face (1, 3, 4 or 6) and write
    /// gaussians_NNNN.json per frame.
    #[arg(long)]
    pub per_face: Option<usize>,
    /// Deform an existing Gaussian set instead of binding a new one.
    #[arg(long, conflicts_with = "per_face")]
    pub gaussians: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Directory of target OBJ frames, taken in file-name order.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub lambda_arap: Option<f64>,
    #[arg(long)]
    pub lambda_nc: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub convergence_tol: Option<f64>,
    /// lbfgs, gradient or lm
    #[arg(long)]
    pub descent: Option<String>,
    /// Accepted for uniformity; fitting uses no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Deformed OBJ with the rest mesh's connectivity.
    #[arg(long)]
    pub deformed: Option<PathBuf>,
    /// Per-vertex rotations `{"rotvecs": [[x, y, z], ...]}`; identity if
    /// omitted.
    #[arg(long)]
    pub rotations: Option<PathBuf>,
    /// Also write the JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let serial = cli.serial || cfg.serial.unwrap_or(false);
    let body = || match cli.command {
        Command::BuildGraph(a) => commands::build_graph(a, &cfg),
        Command::Deform(a) => commands::deform(a, &cfg),
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Energy(a) => commands::energy(a, &cfg),
    };
    if serial {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        pool.install(body)
    } else {
        body()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
