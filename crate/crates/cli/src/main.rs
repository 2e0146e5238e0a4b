use std::path::PathBuf;
use std::process::ExitCode;

use antifield_cli::model_file::load_model;
use antifield_cli::pipeline::{run, Command, Options};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "antifield", version, about = "Field-antifield actions for systems with first-class constraints")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Structure functions and pullback consistency.
    Check(Args),
    /// Gauge-structure tensors read from the action.
    Tensors(Args),
    /// Master equation and boundary conditions.
    Master(Args),
    /// Everything, including the independence audit.
    Report(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct Args {
    /// Model file (TOML).
    model: PathBuf,
    /// Antighost truncation order of the action [default: 3, or the file's options.max_order].
    #[arg(long)]
    max_order: Option<u32>,
    /// Coefficient degree bound for the decomposition solvers.
    #[arg(long)]
    degree_bound: Option<u32>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Seed for the sampled rank checks.
    #[arg(long, default_value_t = antifield::constraint_algebra::DEFAULT_SEED)]
    seed: u64,
    /// Also solve and verify the second-order structure functions J.
    #[arg(long)]
    want_j: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Tensors(a) => (Command::Tensors, a),
        Cmd::Master(a) => (Command::Master, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let opts = Options {
        max_order: args.max_order,
        degree_bound: args.degree_bound,
        seed: args.seed,
        want_j: args.want_j,
    };
    let report = load_model(&args.model)
        .map_err(Into::into)
        .and_then(|file| run(command, &file, &opts));
    match report {
        Ok(report) => {
            match args.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => print!("{}", report.to_json()),
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
