use clap::Parser;
use v2x_ledger_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
