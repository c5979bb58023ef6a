use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tack_cli::config::RunConfig;
use tack_cli::manifest::Format;
use tack_cli::run::{execute, Command, RunError, RunOptions};

/// Mirror-electrode ion trap design and analysis.
#[derive(Debug, Parser)]
#[command(name = "tack", version)]
struct Cli {
    command: Command,
    /// TOML configuration file.
    config: PathBuf,
    /// `key=value` overrides, e.g. `grid.spacing=20um` or `drive.amplitude=300`.
    overrides: Vec<String>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
}

fn run(cli: &Cli) -> Result<Vec<String>, RunError> {
    if let Some(threads) = std::env::var("TACK_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let config = RunConfig::load(&cli.config, &cli.overrides)?;
    let options = RunOptions {
        output_dir: cli.output_dir.clone(),
        seed: cli.seed,
        format: cli.format,
    };
    Ok(execute(cli.command, &config, &options)?.summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code())
        }
    }
}
