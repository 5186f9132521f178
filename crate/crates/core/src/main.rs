use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use stein_mac::cli::{cmd_classify, cmd_exponent, cmd_simulate, parse_gg_spec, ChannelSpec, CliError};

#[derive(Parser)]
#[command(
    name = "stein-mac",
    version,
    about = "Stein-exponents of two-sensor hypothesis testing over cost-constrained MACs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the connectivity class of a kernel file and its marker symbols.
    Classify { kernel: PathBuf },
    /// Print the theoretical exponent and its minimizing distribution.
    #[command(group(ArgGroup::new("chan").required(true).args(["channel", "gg"])))]
    Exponent {
        problem: PathBuf,
        /// Discrete channel kernel file.
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Generalized-Gaussian MAC as p,sigma,h1,h2.
        #[arg(long, value_name = "P,SIGMA,H1,H2")]
        gg: Option<String>,
    },
    /// Run a simulation campaign and emit the CSV report.
    Simulate { config: PathBuf },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Classify { kernel } => cmd_classify(&kernel),
        Command::Exponent {
            problem,
            channel,
            gg,
        } => {
            let spec = match (channel, gg) {
                (Some(path), None) => ChannelSpec::File(path),
                (None, Some(s)) => ChannelSpec::Gg(parse_gg_spec(&s)?),
                _ => unreachable!("clap enforces exactly one channel"),
            };
            cmd_exponent(&problem, &spec)
        }
        Command::Simulate { config } => cmd_simulate(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
