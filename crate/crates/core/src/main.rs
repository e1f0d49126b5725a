use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hslab::cli::{self, CliOverrides, ExitStatus};
use hslab::verify::Pathway;

#[derive(Parser)]
#[command(name = "hslab", version, about = "Hardy-Stein identity verification runs")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every manifest entry and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<u64>,
        #[arg(long, value_parser = parse_pathway)]
        pathway: Option<Pathway>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved plan without computing.
    Describe {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_pathway(s: &str) -> Result<Pathway, String> {
    Pathway::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let status = match Args::parse().command {
        Command::Run { config, seed, paths, pathway, out } => {
            let overrides = CliOverrides { seed, n_paths: paths, pathway, out };
            match cli::run(&config, &overrides) {
                Ok((plan, outcome)) => {
                    for e in &outcome.entries {
                        let mark = if e.passed() { "pass" } else { "FAIL" };
                        println!("{mark}  {}", e.entry_id);
                        for err in &e.errors {
                            println!("      error in {}: {}", err.identity_id.as_str(), err.error);
                        }
                        for id in &e.skipped {
                            println!("      skipped {} (isometry gate failed)", id.as_str());
                        }
                    }
                    println!("reports in {}", plan.out.display());
                    outcome.status()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitStatus::for_error(&e)
                }
            }
        }
        Command::Describe { config } => match cli::describe(&config, &CliOverrides::default()) {
            Ok(text) => {
                print!("{text}");
                ExitStatus::Pass
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitStatus::for_error(&e)
            }
        },
    };
    ExitCode::from(status.code())
}
