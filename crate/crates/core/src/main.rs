use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use landscape_lab::report::{self, Command, RunOptions, Status, WitnessRequest};

#[derive(Parser)]
#[command(name = "landscape-lab", version, about = "Critical points and saddle witnesses of linear and ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON manifest describing the instance and the points to analyse.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Report path; tables are written next to it.
    #[arg(long, global = true, default_value = "report.json")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    group_tol: Option<f64>,
    #[arg(long, global = true)]
    crit_tol: Option<f64>,
    /// Strictness margin for the negative entries of a cone.
    #[arg(long, global = true)]
    margin: Option<f64>,
    /// Witnesses to generate for each point; may be repeated.
    #[arg(long, global = true, value_enum)]
    witness: Vec<WitnessArg>,
    /// Run the exhaustive one-unit cone search.
    #[arg(long, global = true)]
    search: bool,
    #[arg(long, global = true, hide = true, default_value_t = 0.0)]
    perturb_golden: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Two-layer linear network.
    Shallow,
    /// Deep linear network.
    Deep,
    /// One-hidden-layer ReLU network, cone by cone.
    Relu,
    /// Built-in two-sample ReLU instance with a spurious local minimum.
    Example1,
    /// Certify points given by their weights.
    Certify,
}

#[derive(ValueEnum, Clone, Copy)]
enum WitnessArg {
    NonOptimal,
    Optimal,
    Ascent,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = report::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(Status::InputError.exit_code() as u8);
    }
    let opts = RunOptions {
        command: match cli.command {
            Cmd::Shallow => Command::Shallow,
            Cmd::Deep => Command::Deep,
            Cmd::Relu => Command::Relu,
            Cmd::Example1 => Command::Example1,
            Cmd::Certify => Command::Certify,
        },
        input: cli.input,
        out: cli.out,
        seed: cli.seed,
        group_tol: cli.group_tol,
        crit_tol: cli.crit_tol,
        margin: cli.margin,
        witness: cli
            .witness
            .iter()
            .map(|w| match w {
                WitnessArg::NonOptimal => WitnessRequest::NonOptimal,
                WitnessArg::Optimal => WitnessRequest::Optimal,
                WitnessArg::Ascent => WitnessRequest::Ascent,
            })
            .collect(),
        search: cli.search,
        perturb_golden: cli.perturb_golden,
    };
    match report::run(&opts) {
        Ok(out) => {
            println!("{}", out.report.display());
            if let Some(t) = out.table {
                println!("{}", t.display());
            }
            if out.status != Status::Ok {
                eprintln!("status: {:?}", out.status);
            }
            ExitCode::from(out.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(report::status_for(&e).exit_code() as u8)
        }
    }
}
