use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spatreg::simulation::Scheme;
use spatreg::variogram::ModelKind;

mod commands;
mod io;

/// Spatially weighted registration of functional data.
#[derive(Parser, Debug)]
#[command(name = "spatreg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Repair a distance matrix and embed it in Euclidean space.
    Euclideanize(EuclideanizeArgs),
    /// Register curves observed at spatial locations.
    Register(RegisterArgs),
    /// Run the Monte-Carlo comparison of spatial and non-spatial registration.
    Simulate(SimulateArgs),
    /// Recompute displacement and stretch from a warps file.
    Functionals(FunctionalsArgs),
}

#[derive(Args, Debug)]
pub struct EuclideanizeArgs {
    /// Distances: square CSV with an id header, or long `from_id,to_id,value`.
    pub distances: PathBuf,
    /// `auto-rss`, `auto-sill` or a fixed dimension.
    #[arg(long, default_value = "auto-rss")]
    pub dim: String,
    /// Coordinates `location_id,lat,lon` whose great-circle distances are the auto-rss baseline.
    #[arg(long)]
    pub geodesic: Option<PathBuf>,
    /// A distance matrix to use as the auto-rss baseline instead of --geodesic.
    #[arg(long, conflicts_with = "geodesic")]
    pub baseline: Option<PathBuf>,
    /// Curves for auto-sill, which scores each dimension by the fitted sill-to-nugget ratio.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Largest dimension tried by auto-sill.
    #[arg(long, default_value_t = 20)]
    pub max_dim: usize,
    #[arg(long, value_enum, default_value_t = Model::Matern)]
    pub model: Model,
    /// Embedding coordinates `location_id,x1,...,xp`.
    #[arg(long)]
    pub out: PathBuf,
    /// Dimension report; defaults to `<out>` with a `_report` suffix.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    /// Observations `location_id,time,value`.
    #[arg(long)]
    pub curves: PathBuf,
    /// Euclidean distances between locations.
    #[arg(long, conflicts_with = "embed")]
    pub distances: Option<PathBuf>,
    /// Embedding coordinates written by `euclideanize`.
    #[arg(long)]
    pub embed: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = Model::Matern)]
    pub model: Model,
    /// Points on the common evaluation grid.
    #[arg(long, default_value_t = spatreg::quad::DEFAULT_GRID)]
    pub grid: usize,
    /// Upper bound on the fitted variogram range, as a multiple of the largest distance.
    #[arg(long, default_value_t = 1e3)]
    pub max_range_factor: f64,
    /// Scale aligned curves to unit L2 norm.
    #[arg(long)]
    pub normalize: bool,
    /// Output files are `<prefix>_warps.csv`, `<prefix>_aligned.csv`, and so on.
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scheme: Scheme,
    /// Range of the exponential warp covariance.
    #[arg(long)]
    pub psi: f64,
    #[arg(long, default_value_t = 300)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Variogram model fitted in spatial mode.
    #[arg(long, value_enum, default_value_t = Model::Exponential)]
    pub model: Model,
    /// Observation noise variance.
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// Draw the locations once rather than per replicate.
    #[arg(long)]
    pub freeze_locations: bool,
    /// Write every accepted replicate's data and true warps to this directory.
    #[arg(long)]
    pub emit_data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FunctionalsArgs {
    /// Warps `location_id,t,h_inv` as written by `register`.
    #[arg(long)]
    pub warps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Spatial,
    Nonspatial,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Model {
    Matern,
    Exponential,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Matern => ModelKind::Matern,
            Model::Exponential => ModelKind::Exponential,
        }
    }
}

fn configure_threads() -> Result<(), io::CliError> {
    let Ok(v) = std::env::var("SPATREG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| io::CliError::input(format!("SPATREG_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| io::CliError::input(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = configure_threads().and_then(|()| match cli.command {
        Command::Euclideanize(a) => commands::euclideanize(&a),
        Command::Register(a) => commands::register(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Functionals(a) => commands::functionals(&a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
