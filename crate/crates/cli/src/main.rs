use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use marlperf::app::{self, Overrides};
use marlperf::CliError;

#[derive(Parser)]
#[command(name = "marlperf", version, about = "Profile multi-agent RL training pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write breakdown.csv and summary.json.
    Run(Flags),
    /// Run every value of the config's [sweep] section and write sweep.csv.
    Sweep(Flags),
    /// Parse and validate a config, printing the plans it describes.
    Validate {
        config: PathBuf,
    },
}

#[derive(Args)]
struct Flags {
    config: PathBuf,
    /// Write outputs here instead of output.directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing report files.
    #[arg(long)]
    force: bool,
    /// Replace category stamping with no-ops.
    #[arg(long)]
    no_profile: bool,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_dir: self.output_dir.clone(),
            seed: self.seed,
            force: self.force,
            no_profile: self.no_profile,
        }
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = app::load(&config, &Overrides::default())?;
            print!("{}", app::describe(&cfg));
        }
        Command::Run(f) => {
            let o = f.overrides();
            let cfg = app::load(&f.config, &o)?;
            let a = app::run_experiment(&cfg, &o)?;
            println!("wrote {}", a.directory.display());
        }
        Command::Sweep(f) => {
            let o = f.overrides();
            let cfg = app::load(&f.config, &o)?;
            let a = app::run_sweep(&cfg, &o)?;
            println!("wrote {}", a.directory.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("marlperf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
