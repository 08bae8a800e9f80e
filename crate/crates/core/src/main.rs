use std::path::PathBuf;

use clap::Parser;
use infogeom::cli::{self, Command, Format, Invocation, MethodChoice, CSV_HELP};

/// Information geometry of unitarily invariant random matrix models.
///
/// Any scalar config field can be overridden with a dotted flag, for
/// example `--sampler.steps=200000` or `--model.n 8`.
#[derive(Parser)]
#[command(name = "infogeom", version, after_help = CSV_HELP)]
struct Args {
    /// Command to run; overrides `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; required whenever the run samples.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<MethodChoice>,
    #[arg(long, value_enum)]
    output: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let (argv, overrides) = cli::split_overrides(std::env::args().collect());
    let args = Args::parse_from(argv);
    let inv = Invocation {
        command: args.command,
        config: args.config,
        seed: args.seed,
        method: args.method,
        output: args.output,
        out: args.out,
        overrides,
    };
    std::process::exit(cli::execute(&inv));
}
