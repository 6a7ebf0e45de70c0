//! `orthoreg` command-line front end.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orthoreg::measures::Variant;
use orthoreg::relaxation::RatioPattern;

#[derive(Parser, Debug)]
#[command(
    name = "orthoreg",
    version,
    about = "Kernel-orthogonality regularization toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Near-orthogonality table for one or more tensor files.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Average layers that share a shape.
        #[arg(long)]
        group_by_shape: bool,
        #[arg(long)]
        json: bool,
    },
    /// Relaxation plan for an architecture description.
    Plan(PlanArgs),
    /// Evaluate a regularizer on a tensor file.
    Loss(LossArgs),
    /// Compare the analytic regularizer gradient with finite differences.
    Gradcheck(LossArgs),
    /// Monte Carlo estimate of same-box pairs.
    Simulate {
        #[arg(long)]
        freed: usize,
        #[arg(long)]
        boxes: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Ratio map for a group of modules.
    RatioMap {
        #[arg(long)]
        modules: usize,
        #[arg(long, default_value_t = 1.0)]
        least_ratio: f64,
        #[arg(long, value_enum, default_value_t = PatternArg::Log)]
        pattern: PatternArg,
        #[arg(long)]
        json: bool,
    },
    /// Check the diagonal/triangle reconstruction of the Frobenius residual.
    Verify {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train a toy network from a JSON config.
    Train {
        config: PathBuf,
        /// Directory for metrics.jsonl, schedule.jsonl and summary.txt.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Frobenius sweep on an over-determined layer.
    DemoInaccessible {
        config: PathBuf,
        /// Directory for demo.json and demo.txt.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct PlanArgs {
    arch: PathBuf,
    #[arg(long)]
    attribute: usize,
    #[arg(long, default_value_t = 30)]
    intrinsic: usize,
    #[arg(long)]
    max_transition: usize,
    #[arg(long, default_value_t = 1.0)]
    least_ratio: f64,
    #[arg(long, value_enum, default_value_t = PatternArg::Log)]
    pattern: PatternArg,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
    /// Write the plan JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LossArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    measure: MeasureArg,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Plan JSON whose exemption counts build the mask (relaxed measure).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    power_iterations: usize,
    #[arg(long)]
    json: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum MeasureArg {
    Frobenius,
    ScaledFrobenius,
    Srip,
    Disentangled,
    RelaxedDisentangled,
}

impl From<MeasureArg> for Variant {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Frobenius => Variant::Frobenius,
            MeasureArg::ScaledFrobenius => Variant::ScaledFrobenius,
            MeasureArg::Srip => Variant::Srip,
            MeasureArg::Disentangled => Variant::Disentangled,
            MeasureArg::RelaxedDisentangled => Variant::RelaxedDisentangled,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum PatternArg {
    Linear,
    Log,
    Exp,
}

impl From<PatternArg> for RatioPattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Linear => RatioPattern::Linear,
            PatternArg::Log => RatioPattern::Log,
            PatternArg::Exp => RatioPattern::Exp,
        }
    }
}

/// A check that ran but did not meet its tolerance.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NumericalFailure>().is_some() {
        return EXIT_NUMERICAL;
    }
    if err.downcast_ref::<commands::UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<orthoreg::Error>() {
        Some(orthoreg::Error::Numerical { .. }) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
