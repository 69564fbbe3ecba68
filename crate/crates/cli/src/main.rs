use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use portopt::pipeline::{self, validate_config, PipelineError, RunConfig};

#[derive(Parser)]
#[command(
    name = "portopt",
    version,
    about = "MVP, HRP and autoencoder portfolios from daily close prices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured method and write all artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Download prices into the cache without running the pipeline.
    Fetch {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            match pipeline::run(&cfg) {
                Ok(summary) => {
                    for r in &summary.reports {
                        println!(
                            "{} {:>5}  return {:>7.2}%  volatility {:>6.2}%  sharpe {:>7.4}",
                            r.method,
                            r.period,
                            r.annual_return * 100.0,
                            r.annual_volatility * 100.0,
                            r.sharpe
                        );
                    }
                    for f in &summary.failures {
                        eprintln!("error: {} failed: {}", f.method, f.error);
                    }
                    println!("wrote {} files to {}", summary.written.len(), cfg.output_dir.display());
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate { config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let violations = validate_config(&cfg);
            if violations.is_empty() {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            } else {
                for v in &violations {
                    eprintln!("{v}");
                }
                ExitCode::from(1)
            }
        }
        Command::Fetch { config } => {
            let result = RunConfig::load(&config).and_then(|cfg| pipeline::fetch_only(&cfg));
            match result {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
