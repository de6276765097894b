//! Command-line front end for the offline contextual-bandit toolkit.
//!
//! Pipelines chain four file-producing commands — `simulate` writes an
//! events log from a synthetic world, `fit` counts it into a propensity
//! table, `train` fits a click regressor with the learning-rate sweep, and
//! `evaluate` scores policies with the clipped inverse-propensity estimator
//! — plus `act`, which scores one context against a candidate list. Every
//! file-producing run writes a `<out>.manifest` with input/output digests.
//!
//! Exit codes: 0 success, 2 usage, 3 data format, 4 numeric or capacity.

mod commands;
mod manifest;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use banditkit::propensity::FitScope;
use banditkit::Error;
use clap::{Args, Parser, Subcommand};

use commands::{
    cmd_act, cmd_evaluate, cmd_fit, cmd_simulate, cmd_train, ActArgs, EvaluateArgs, FitArgs,
    PolicySpec, Segment, SimulateArgs, TrainArgs,
};

#[derive(Parser)]
#[command(name = "banditkit", version, about = "Offline contextual-bandit evaluation and warm-start training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an events log from a world file and a logging-policy sequence.
    Simulate(SimulateCli),
    /// Fit the empirical propensity table from an events log.
    Fit(FitCli),
    /// Train the importance-weighted click regressor (or the naive baseline).
    Train(TrainCli),
    /// Evaluate policies with the clipped inverse-propensity estimator.
    Evaluate(EvaluateCli),
    /// Score one context against a candidate action list.
    Act(ActCli),
}

#[derive(Args)]
struct SimulateCli {
    /// World file (contexts, actions, rewards, optional features).
    #[arg(long)]
    world: PathBuf,
    /// Logging-policy sequence file.
    #[arg(long)]
    seq: PathBuf,
    /// RNG seed; identical seeds give byte-identical logs.
    #[arg(long)]
    seed: u64,
    /// Cycle the policy sequence to exactly this many rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Insert the #split marker before this event index.
    #[arg(long)]
    split_at: Option<usize>,
    /// Output events file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the world's full action catalog here.
    #[arg(long)]
    catalog_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitCli {
    /// Events file to count.
    #[arg(long)]
    events: PathBuf,
    /// Action catalog for events that omit action features.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Which events to count: all (default), train, or split
    /// (train/split need a #split marker; split counts the test segment).
    #[arg(long, default_value = "all")]
    scope: String,
    /// Output propensity table file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCli {
    #[arg(long)]
    events: PathBuf,
    /// Propensity table file for the importance weights.
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Clipping threshold shared by training weights and evaluation.
    #[arg(long)]
    tau: f64,
    /// Comma-separated learning-rate sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.02, 0.01])]
    learning_rates: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    passes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train the naive baseline: unweighted, argmax over the whole catalog.
    #[arg(long)]
    naive: bool,
    /// Drop the importance weights (w = 1) without changing the argmax domain.
    #[arg(long)]
    unweighted: bool,
    /// Which segment of a marked events file to train on.
    #[arg(long, default_value = "all")]
    segment: String,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateCli {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Policy to evaluate: `random`, `model:PATH`, `naive:PATH`, or a bare
    /// model path. Repeat for one report row per policy.
    #[arg(long = "policy", required = true)]
    policies: Vec<String>,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Reserved for sampled baselines; the shipped Random row is analytic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which segment of a marked events file to evaluate on.
    #[arg(long, default_value = "all")]
    segment: String,
    /// Also write the report to this file (and a manifest next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ActCli {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Context feature list, e.g. '"apple":0.5,"pie":0.25'.
    #[arg(long)]
    context: String,
    /// Restrict scoring to these comma-separated action ids.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<String>>,
}

fn run() -> banditkit::Result<()> {
    match Cli::parse().command {
        Command::Simulate(c) => cmd_simulate(SimulateArgs {
            world: c.world,
            seq: c.seq,
            seed: c.seed,
            rounds: c.rounds,
            split_at: c.split_at,
            out: c.out,
            catalog_out: c.catalog_out,
        }),
        Command::Fit(c) => cmd_fit(FitArgs {
            events: c.events,
            catalog: c.catalog,
            scope: c.scope.parse::<FitScope>()?,
            out: c.out,
        }),
        Command::Train(c) => cmd_train(TrainArgs {
            events: c.events,
            table: c.table,
            catalog: c.catalog,
            tau: c.tau,
            learning_rates: c.learning_rates,
            passes: c.passes,
            seed: c.seed,
            naive: c.naive,
            unweighted: c.unweighted,
            segment: c.segment.parse::<Segment>()?,
            out: c.out,
        }),
        Command::Evaluate(c) => cmd_evaluate(EvaluateArgs {
            events: c.events,
            table: c.table,
            catalog: c.catalog,
            policies: c.policies.iter().map(|s| PolicySpec::parse(s)).collect(),
            tau: c.tau,
            delta: c.delta,
            seed: c.seed,
            segment: c.segment.parse::<Segment>()?,
            out: c.out,
        }),
        Command::Act(c) => cmd_act(ActArgs {
            model: c.model,
            catalog: c.catalog,
            context: c.context,
            candidates: c.candidates,
        }),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) => 2,
                Error::Format(_) | Error::Io(_) | Error::Estimation(_) => 3,
                Error::Training { .. } | Error::Capacity(_) | Error::Domain(_) | Error::Policy(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}
