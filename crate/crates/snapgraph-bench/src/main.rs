use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use snapgraph_bench::{run_benchmark, Cli, Command};

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Bench(args) => {
            let out = args.out.clone();
            let cfg = args.into_config()?;
            snapgraph::snapshot::diag::reset();
            let record = run_benchmark(&cfg)?;
            if std::env::var_os("SNAPDIAG").is_some() {
                eprintln!("diag: {}", snapgraph::snapshot::diag::dump());
            }
            match out {
                Some(path) => record.write_csv(&path)?,
                None => print!("{}", record.to_csv()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
