mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qmarkov::DerivativeMethod;

/// Cluster-expansion toolkit for quantum Gibbs states: effective Hamiltonians,
/// partition functions, conditional mutual information and their certificates.
#[derive(Parser, Debug)]
#[command(name = "qmarkov", version)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the JSON report (with provenance) to this path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report to stdout instead of the table.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    BetaTaylor,
    Extended,
    Fd,
}

impl From<MethodArg> for DerivativeMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::BetaTaylor => DerivativeMethod::BetaTaylor,
            MethodArg::Extended => DerivativeMethod::ExtendedSpace,
            MethodArg::Fd => DerivativeMethod::FiniteDifference,
        }
    }
}

/// Flags shared by every model-driven command.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Override the inverse temperature from the file.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Rescale the energy unit when the normalization is violated instead of rejecting.
    #[arg(long)]
    pub rescale: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::BetaTaylor)]
    pub method: MethodArg,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    pub fd_step: f64,
    /// Largest number of sites diagonalized exactly.
    #[arg(long, default_value_t = qmarkov::ed::DEFAULT_ED_LIMIT)]
    pub ed_limit: usize,
}

/// Truncation order, given directly or through a target accuracy per site.
#[derive(Args, Debug, Clone)]
#[group(required = false, multiple = false)]
pub struct OrderArgs {
    /// Truncation order m₀.
    #[arg(long)]
    pub order: Option<usize>,
    /// Pick the smallest order whose certificate is at most n·ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count connected clusters attached to anchor regions, against the counting bound.
    Clusters {
        #[command(flatten)]
        model: ModelArgs,
        /// Anchor regions separated by ';', e.g. "0;1,2" (default: every vertex).
        #[arg(long)]
        anchors: Option<String>,
        #[arg(long, default_value_t = 3)]
        max_order: usize,
    },
    /// Truncated effective Hamiltonian of a region.
    Effham {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        order: OrderArgs,
        /// Region L, e.g. "0,1,2".
        #[arg(long)]
        region: String,
    },
    /// Log partition function from the cluster series.
    Logz {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        order: usize,
    },
    /// Approximate reduced Gibbs state of a region.
    Reduced {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        order: OrderArgs,
        #[arg(long)]
        region: String,
    },
    /// Expectation of a Pauli-string observable.
    Observable {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        order: OrderArgs,
        /// Pauli string, one letter per support vertex, e.g. "ZZ".
        #[arg(long)]
        pauli: String,
        #[arg(long)]
        support: String,
        /// Enlarge the region around the support by this many graph steps.
        #[arg(long, default_value_t = 0)]
        padding: usize,
    },
    /// Von Neumann entropy of a region.
    Entropy {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        order: OrderArgs,
        #[arg(long)]
        region: String,
    },
    /// Conditional mutual information I(A:C|B): series, bound, exact value.
    Cmi {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long)]
        a: String,
        #[arg(long, default_value = "")]
        b: String,
        #[arg(long)]
        c: String,
    },
    /// Evaluate a closed-form bound.
    Bound {
        #[command(subcommand)]
        which: BoundCommand,
    },
    /// Run seeded verification suites against exact diagonalization.
    Verify {
        /// derivatives, certificates, counting, bounds, longrange or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 10)]
        ed_limit: usize,
        #[arg(long, default_value_t = 1e-3)]
        fd_step: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum BoundCommand {
    /// β_c = 1/(8e³k).
    Critical {
        #[arg(long)]
        k: usize,
    },
    /// Finite-range CMI decay bound.
    Markov {
        #[arg(long)]
        minsurf: usize,
        #[arg(long)]
        beta: f64,
        /// Defaults to β_c(k).
        #[arg(long)]
        beta_c: Option<f64>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        d_ac: usize,
        #[arg(long, default_value_t = 1)]
        r: usize,
    },
    /// Power-law CMI decay bound.
    PowerLaw {
        #[arg(long)]
        min_ac: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        d_ac: usize,
    },
    /// Recovery-map error √(I·log 2).
    Recovery {
        #[arg(long)]
        cmi: f64,
    },
    /// Surface region ∂L_l of a model's graph.
    Surface {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        region: String,
        #[arg(long)]
        l: usize,
    },
    /// Exhaustive long-range tail sum against 11^m·l₀^{-α}.
    TailSum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        l0: usize,
    },
    /// Exact mutual-information increments as slices are added to B.
    Saturation {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        a: String,
        /// Slices separated by ';', e.g. "2;3;4,5".
        #[arg(long)]
        slices: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
