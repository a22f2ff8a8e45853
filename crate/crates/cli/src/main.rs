//! `restartsc`: cluster, benchmark, verify the approximation bounds, and
//! generate synthetic blobs.

mod args;
mod commands;
mod config;
mod failure;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(
        match cli.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        },
    ))
    .init();

    let result = match &cli.command {
        Command::Cluster(a) => commands::cluster(a),
        Command::Bench(a) => commands::bench(a),
        Command::VerifyTheory(a) => commands::verify_theory(a),
        Command::MakeBlobs(a) => commands::make_blobs(a),
    };
    match result {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {f}");
            std::process::exit(f.exit_code());
        }
    }
}
