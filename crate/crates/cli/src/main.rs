use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use idsim_cli::runner::{self, RunOptions, EXIT_USAGE};
use idsim_cli::schema::{describe, kind_info, KINDS};

#[derive(Parser)]
#[command(name = "idsim", version, about = "Run limit-theorem experiments for infinitely divisible processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        no_plots: bool,
    },
    /// List the experiment kinds.
    List,
    /// Print the schema of a kind and the property it verifies.
    Describe { kind: String },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return code(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            for k in &KINDS {
                println!("{:<14} {}", k.name, k.summary);
            }
            code(0)
        }
        Command::Describe { kind } => match kind_info(&kind) {
            Some(k) => {
                print!("{}", describe(k));
                code(0)
            }
            None => {
                eprintln!("unknown kind `{kind}`; run `idsim list`");
                code(EXIT_USAGE)
            }
        },
        Command::Run { config, seed, out, jobs, no_plots } => {
            if let Some(j) = jobs {
                if j == 0 || rayon::ThreadPoolBuilder::new().num_threads(j).build_global().is_err() {
                    eprintln!("--jobs must be a positive integer");
                    return code(EXIT_USAGE);
                }
            }
            let cfg = match runner::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(e.exit_code());
                }
            };
            match runner::run(&cfg, &RunOptions { seed, out, plots: !no_plots }) {
                Ok(r) => {
                    print!("{}", r.outcome.summary(r.kind, r.seed));
                    println!("wall clock {:.1} s; artifacts in {}", r.seconds, r.out_dir.display());
                    code(r.exit_code())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(e.exit_code())
                }
            }
        }
    }
}
