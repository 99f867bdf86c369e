use clap::Parser;
use strongstat::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
