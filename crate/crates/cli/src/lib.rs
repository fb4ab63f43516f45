//! Command-line front end: synthetic datasets, odometry runs, trajectory
//! evaluation and configuration sweeps.

pub mod ablate_cmd;
pub mod dataset;
pub mod error;
pub mod eval_cmd;
pub mod odom_cmd;
pub mod synth_cmd;

use clap::{Parser, Subcommand};

use crate::error::exit;

#[derive(Debug, Parser)]
#[command(name = "lodestar", version, about = "Marine radar odometry from radar imagery alone")]
pub struct Cli {
    /// Log progress (repeat for per-iteration detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset from a scene and a route.
    Synth(synth_cmd::SynthArgs),
    /// Estimate a trajectory from a dataset.
    Odom(odom_cmd::OdomArgs),
    /// Absolute pose error of a trajectory against a reference.
    Eval(eval_cmd::EvalArgs),
    /// Run odometry and evaluation for every combination in a sweep.
    Ablate(ablate_cmd::AblateArgs),
}

/// Runs one parsed command and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Synth(args) => synth_cmd::run(args).map(|m| {
            println!("{} frames written to {}", m.frames.len(), args.out.display());
            exit::OK
        }),
        Command::Odom(args) => odom_cmd::run(args).map(|run| {
            println!("{} poses written to {}", run.trajectory.len(), args.out.display());
            exit::OK
        }),
        Command::Eval(args) => eval_cmd::run(args).map(|r| {
            println!("{}", r.summary());
            println!(
                "align={} pairs={} trans_mean={:.3} trans_max={:.3} rot_mean={:.3} rot_max={:.3}",
                r.mode,
                r.pairs.len(),
                r.trans_mean,
                r.trans_max,
                r.rot_mean,
                r.rot_max
            );
            exit::OK
        }),
        Command::Ablate(args) => ablate_cmd::run(args).map(|report| {
            for (i, cell) in report.cells.iter().enumerate() {
                let label: Vec<String> = report
                    .axes
                    .iter()
                    .zip(&cell.values)
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                match &cell.result {
                    Ok(m) => println!("{i:3} {}: {:.3}/{:.3}", label.join(" "), m.ape.trans_rmse, m.ape.rot_rmse),
                    Err(e) => println!("{i:3} {}: failed: {e}", label.join(" ")),
                }
            }
            if report.failures() > 0 {
                eprintln!("{} of {} cells failed", report.failures(), report.cells.len());
            }
            report.exit_code()
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
