use clap::Parser;
use isac_beamkit_cli::{execute, RunConfig};

fn main() {
    let cfg = RunConfig::parse();
    std::process::exit(execute(&cfg));
}
