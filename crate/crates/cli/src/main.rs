//! `wls`: generate instances, solve, evaluate and verify.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use wls_core::generate::Profile;
use wls_core::rng::{DEFAULT_SEED, SEED_ENV};

#[derive(Parser, Debug)]
#[command(name = "wls", version, about = "Warehouse lot scheduling: solvers, evaluator and checks")]
struct Cli {
    /// Worker threads for Monte Carlo and per-class work.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Compute a replenishment policy.
    Solve(SolveArgs),
    /// Certify cost and peak space of a policy.
    Eval(EvalArgs),
    /// Build and verify one synchronization gadget.
    Gadget(GadgetArgs),
    /// Monte Carlo checks of the rounding step.
    Po2(Po2Args),
    /// Run every check in one go.
    VerifyAll(VerifyAllArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "uniform")]
    profile: Profile,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
    /// Also write a capacity-feasible benchmark policy.
    #[arg(long)]
    benchmark_out: Option<PathBuf>,
    /// Rungs of the benchmark's power-of-two ladder.
    #[arg(long, default_value_t = 12)]
    levels: u32,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Algorithm {
    Classical2,
    Sub2,
    RelaxExact,
    RelaxDp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Preset {
    /// eps = 0.3, dense classes from 1000 commodities.
    Desk,
    /// The analysis's own thresholds; eps must be below 1/10.
    Analysis,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PrefixArg {
    RelaxHalve,
    Exhaustive,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "classical2")]
    algorithm: Algorithm,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sparse_threshold: Option<f64>,
    #[arg(long)]
    allow_large_eps: bool,
    #[arg(long, value_enum, default_value = "relax-halve")]
    prefix_solver: PrefixArg,
    /// Near-optimal policy whose classes the construction follows.
    #[arg(long)]
    benchmark: Option<PathBuf>,
    /// Enumerate every guess instead of reading them off the benchmark (toy sizes only).
    #[arg(long)]
    enumerate: bool,
    /// Space budget for the relaxations; defaults to twice the capacity.
    #[arg(long)]
    budget: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inventory trace over one hyperperiod (or the longest cycle).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(rename_all = "kebab-case")]
struct GadgetArgs {
    #[arg(long)]
    case: u8,
    /// Exponent `log2(T_A / T_B)` for the open-ended case.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long = "K-a", default_value_t = 1.0)]
    k_a: f64,
    #[arg(long = "H-a", default_value_t = 1.0)]
    h_a: f64,
    #[arg(long = "gamma-a", default_value_t = 1.0)]
    gamma_a: f64,
    #[arg(long = "K-b", default_value_t = 1.0)]
    k_b: f64,
    #[arg(long = "H-b", default_value_t = 1.0)]
    h_b: f64,
    /// Defaults to `gamma_a T_A / T_B`, the exactly balanced couple.
    #[arg(long = "gamma-b")]
    gamma_b: Option<f64>,
    #[arg(long = "T-a", default_value_t = 1.0)]
    t_a: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long)]
    emit_trace: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Check {
    Claim3,
    Claim4,
    Lemma10,
    Lemma12,
}

#[derive(Args, Debug)]
struct Po2Args {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Samples, groups, trials or draws, depending on the check.
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyAllArgs {
    /// Draws for the class-policy check.
    #[arg(long, default_value_t = 500)]
    draws: usize,
    /// Trials for the concentration check.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Solve(a) => commands::solve(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gadget(a) => commands::gadget(a),
        Command::Po2(a) => commands::po2(a),
        Command::VerifyAll(a) => commands::verify_all(a),
    };
    match result {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
