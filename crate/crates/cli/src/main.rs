//! `mppac`: learn PAC bounds on the maximal mean payoff of a model file.

mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mppac::model::{parse_model, ExplicitModel, ModelKind};
use mppac::stats::rate_samples;
use mppac::whitebox::{enumerate_policies_gain, exact_mean_payoff, DEFAULT_BETA};

#[derive(Parser)]
#[command(name = "mppac", version, about = "PAC mean-payoff learning for blackbox and greybox MDPs and CTMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn bounds by simulation.
    Run(RunArgs),
    /// Parse and validate a model file.
    Lint {
        model: PathBuf,
    },
    /// Chernoff sample counts for rate precisions and inconfidences.
    RatesTable,
    /// Solve a model exactly.
    SolveWhitebox {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        /// Also brute-force all positional policies.
        #[arg(long)]
        enumerate: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Blackbox,
    /// Blackbox access, greybox equations; pays a surcharge on the inconfidence.
    BlackboxGreyUpdates,
    Greybox,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Mdp,
    Ctmdp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    Wall,
    Virtual,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Checked against the file header.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, value_enum, default_value = "blackbox")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 6)]
    pub revisit_threshold: usize,
    #[arg(long, default_value_t = 10_000)]
    pub episodes_per_round: usize,
    #[arg(long, default_value_t = 1800.0)]
    pub timeout_s: f64,
    #[arg(long, env = "MPPAC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Number of independent runs.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Seeds for repeated runs: `A..B` (inclusive) or a comma list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Trace output; with several runs, `-seed<N>` is added to the file stem.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Ignore the termination test and run until the timeout.
    #[arg(long)]
    pub anytime: bool,
    /// Bound CTMDP end components by the full sweep instead of three calls.
    #[arg(long)]
    pub exact_mec_bounds: bool,
    /// Stop on an absolute rather than an `r_max`-relative width.
    #[arg(long)]
    pub absolute: bool,
    /// `virtual` counts oracle steps and episodes instead of seconds.
    #[arg(long, value_enum, default_value = "wall")]
    pub clock: ClockArg,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

fn load(path: &PathBuf) -> Result<ExplicitModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_model(&text)?)
}

fn lint(path: &PathBuf) -> Result<()> {
    let model = load(path)?;
    let smallest = model.smallest_probability();
    println!("OK, {} states", model.state_count());
    println!("kind {}", model.kind());
    println!("reachable states {}", model.reachable_count());
    let verdict = if smallest + 1e-12 >= model.p_min() {
        "consistent"
    } else {
        "inconsistent"
    };
    println!(
        "pmin {} {verdict} with smallest probability {smallest}",
        model.p_min()
    );
    Ok(())
}

pub const TABLE_ALPHAS: [f64; 4] = [0.03, 0.05, 0.10, 0.20];
pub const TABLE_DELTAS: [f64; 4] = [0.1, 0.05, 1e-4, 1e-7];

fn rates_table() {
    print!("alpha");
    for d in TABLE_DELTAS {
        print!("\t{d}");
    }
    println!();
    for a in TABLE_ALPHAS {
        print!("{a}");
        for d in TABLE_DELTAS {
            print!("\t{}", rate_samples(a, d));
        }
        println!();
    }
}

fn solve(path: &PathBuf, beta: f64, enumerate: bool) -> Result<()> {
    let model = load(path)?;
    println!("{}", exact_mean_payoff(&model, beta)?);
    if enumerate {
        println!("enumerated {}", enumerate_policies_gain(&model)?);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let model = load(&args.model)?;
            if let Some(kind) = args.kind {
                let want = match kind {
                    KindArg::Mdp => ModelKind::Mdp,
                    KindArg::Ctmdp => ModelKind::Ctmdp,
                };
                if want != model.kind() {
                    bail!("--kind {want} but the file declares {}", model.kind());
                }
            }
            run::run(&args, &model)
        }
        Command::Lint { model } => lint(&model),
        Command::RatesTable => {
            rates_table();
            Ok(())
        }
        Command::SolveWhitebox { model, beta, enumerate } => solve(&model, beta, enumerate),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
