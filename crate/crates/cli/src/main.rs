//! `motbounds`: model-independent price bounds from call quotes.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 validation failure,
//! 3 parse error, 4 solver failure, 5 acceptance failure.

mod commands;
mod examples;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mot_core::analysis::SweepOrder;
use mot_core::lp::Sense;

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "motbounds", version, about = "Martingale optimal transport price bounds")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for parallel solves (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Seed for every randomized check.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override (validation tolerance for quotes, check tolerance
    /// for examples).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate (and optionally repair) a quote CSV and write the implied
    /// marginals.
    Marginals(QuoteArgs),
    /// Solve one bound and write its coupling, certificate and gap function.
    Bound(BoundArgs),
    /// Lower and upper bounds with and without the intermediate marginal.
    Improve(ImproveArgs),
    /// Bounds as interior marginals are added one at a time.
    Sweep(SweepArgs),
    /// Run a bundled reproduction and check it against its targets.
    Example(ExampleArgs),
}

#[derive(Debug, Args)]
pub struct QuoteArgs {
    /// `maturity,strike,mid` CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Spot price, when the file has no strike-0 quote.
    #[arg(long)]
    pub spot: Option<f64>,
    /// Repair arbitrage violations with the ℓ¹-closest consistent surface.
    #[arg(long)]
    pub repair: bool,
}

#[derive(Debug, Args)]
pub struct MarginalInput {
    /// `marginals.json` from the `marginals` command, or a quote CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Spot price for a quote CSV without a strike-0 quote.
    #[arg(long)]
    pub spot: Option<f64>,
    /// Repair a quote CSV before deriving marginals.
    #[arg(long)]
    pub repair: bool,
    /// 1-based dates to use, e.g. `1,3` (default: all).
    #[arg(long, value_delimiter = ',')]
    pub marginals: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub input: MarginalInput,
    /// Payoff `NAME[:param=v]`, e.g. `straddle` or `asian:strike=100`.
    #[arg(long)]
    pub payoff: String,
    #[arg(long, value_enum, default_value_t = SenseArg::Min)]
    pub sense: SenseArg,
}

#[derive(Debug, Args)]
pub struct ImproveArgs {
    #[command(flatten)]
    pub input: MarginalInput,
    /// Payoff `NAME[:param=v]`; repeat for several rows.
    #[arg(long, required = true)]
    pub payoff: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: MarginalInput,
    #[arg(long)]
    pub payoff: String,
    #[arg(long, value_enum, default_value_t = OrderArg::Right)]
    pub order: OrderArg,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[arg(value_enum)]
    pub name: ExampleName,
    /// Atoms per quantized continuous marginal.
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Inclusion order reported by `binomial`.
    #[arg(long, value_enum, default_value_t = OrderArg::Right)]
    pub order: OrderArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SenseArg {
    Min,
    Max,
}

impl From<SenseArg> for Sense {
    fn from(s: SenseArg) -> Sense {
        match s {
            SenseArg::Min => Sense::Min,
            SenseArg::Max => Sense::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    Left,
    Right,
}

impl From<OrderArg> for SweepOrder {
    fn from(o: OrderArg) -> SweepOrder {
        match o {
            OrderArg::Left => SweepOrder::Left,
            OrderArg::Right => SweepOrder::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleName {
    Table2,
    Straddle,
    Leftcurtain,
    Binomial,
    Mixture,
    Convexinterp,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .map_err(|e| Failure::other(format!("cannot start {} workers: {e}", cli.global.jobs)))?;
    }
    std::fs::create_dir_all(&cli.global.out)
        .map_err(|e| Failure::other(format!("cannot create {}: {e}", cli.global.out.display())))?;
    match cli.command {
        Command::Marginals(a) => commands::marginals(&cli.global, &a),
        Command::Bound(a) => commands::bound(&cli.global, &a),
        Command::Improve(a) => commands::improve(&cli.global, &a),
        Command::Sweep(a) => commands::sweep(&cli.global, &a),
        Command::Example(a) => examples::run(&cli.global, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
