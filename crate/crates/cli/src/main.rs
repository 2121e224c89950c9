mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "hrdepth", version, about = "Half-region depth of stochastic processes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HRDEPTH_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an ensemble of sample paths to CSV with a JSON sidecar.
    Simulate(SimulateArgs),
    /// Add one smoothing draw per path to an existing ensemble.
    Smooth(SmoothArgs),
    /// Empirical depth of a query function in an ensemble.
    Depth(DepthArgs),
    /// Exact depth of an independent sequence and its zero-depth verdict.
    Exact(ExactArgs),
    /// Analytic checks.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Run an experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Bm,
    Stable,
    Poisson,
    CompoundPoisson,
    Sheet,
    ReflectedBm,
    IntegratedPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Gaussian,
    Laplace,
    Cauchy,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, value_enum, conflicts_with = "model_json")]
    pub model: Option<ModelName>,
    /// Full model as JSON (e.g. product sequences).
    #[arg(long, value_name = "PATH")]
    pub model_json: Option<PathBuf>,
    /// Stability index for `stable`.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Jump rate for the Poisson models.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Smoothing family (adds one draw per path).
    #[arg(long, value_enum)]
    pub smooth: Option<Family>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SmoothArgs {
    #[arg(long)]
    pub paths: PathBuf,
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DepthArgs {
    #[arg(long)]
    pub paths: PathBuf,
    /// Query function CSV on the ensemble's grid.
    #[arg(long, conflicts_with = "level")]
    pub query: Option<PathBuf>,
    /// Constant query level.
    #[arg(long, allow_hyphen_values = true)]
    pub level: Option<f64>,
    /// Grid indices of a finite subset, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "increments")]
    pub subset: Option<Vec<usize>>,
    /// Disjoint increment intervals `u:v`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub increments: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExactArgs {
    /// JSON with `marginals`, `a` and an optional `tail`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum CheckCommand {
    /// Shift bound `∫|f(x+δ) − f(x)| ≤ |δ| ∫|f'|`.
    Lemma1 {
        #[arg(long, value_enum, default_value = "gaussian")]
        family: Family,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', default_value = "0.01,0.1,1")]
        delta: Vec<f64>,
    },
    /// Probability that a random walk stays on one side: `C(2m, m) / 4^m`.
    Sparre {
        #[arg(long)]
        m: u64,
    },
    /// `∫|f'|` in closed form and by quadrature.
    Gradl1 {
        #[arg(long, value_enum, default_value = "gaussian")]
        family: Family,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    ZeroTrend,
    Consistency,
    Rate,
    LimitLaw,
    Subset,
    C2Gap,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentName,
    /// Experiment config, bare or tagged with `"experiment"`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Smooth(a) => commands::smooth(&a),
        Command::Depth(a) => commands::depth(&a),
        Command::Exact(a) => commands::exact(&a),
        Command::Check(c) => commands::check(&c),
        Command::Experiment(a) => commands::experiment(&a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
