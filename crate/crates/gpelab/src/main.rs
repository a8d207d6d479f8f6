use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpelab::{describe, load_config, run, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "gpelab", version, about = "Run dipolar GPE experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List the keys an experiment reads.
    Describe { experiment: Experiment },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("GPELAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("GPELAB_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("gpelab: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Describe { experiment } => {
            print!("{}", describe(experiment));
            return ExitCode::SUCCESS;
        }
        Command::Validate { config } => load_config(&config).map(|cfg| {
            println!("{}: ok ({})", config.display(), cfg.experiment.name());
        }),
        Command::Run {
            config,
            output,
            seed,
            quiet,
        } => load_config(&config).and_then(|mut cfg| {
            Overrides { output, seed }.apply(&mut cfg);
            let say = |m: &str| {
                if !quiet {
                    eprintln!("[gpelab] {m}");
                }
            };
            let status = run(&cfg, &say)?;
            if !quiet {
                println!("{}: {status}", cfg.output_dir.display());
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpelab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
