use std::path::PathBuf;
use std::process::ExitCode;

use bihm_cli::{run, Command, Overrides, RunConfig};
use clap::Parser;

/// Numerical experiments on biharmonic maps from the 4-ball.
#[derive(Debug, Parser)]
#[command(name = "bihm", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration; defaults are used for anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Lattice spacing.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { out: cli.out, seed: cli.seed, h: cli.h, eps0: cli.eps0 };
    let result = RunConfig::resolve(cli.config.as_deref(), &overrides).and_then(|cfg| {
        if cli.print_config {
            print!("{}", toml::to_string(&cfg).expect("config serializes"));
            return Ok(Vec::new());
        }
        run(cli.command, &cfg)
    });
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
