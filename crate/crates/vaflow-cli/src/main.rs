use clap::{Parser, Subcommand};
use std::path::PathBuf;
use vaflow_cli::experiments::{registry, run_experiment};
use vaflow_cli::spec::ExperimentSpec;
use vaflow_cli::CliError;

/// Benchmark runner for the vaflow library.
#[derive(Parser)]
#[command(name = "vaflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV traces and SVG plot.
    Run {
        /// Experiment name (see `vaflow list`).
        #[arg(long)]
        experiment: Option<String>,
        /// JSON file with a full experiment spec; command-line flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parameter override, may repeat: --set alpha0=1e-4 --set num=100
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the available experiments and their default parameters.
    List,
}

fn main() {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::List => {
            for experiment in registry() {
                println!("{}  -  {}", experiment.name(), experiment.summary());
                for (key, value) in experiment.default_params() {
                    println!("    {key} = {value}");
                }
            }
            Ok(())
        }
        Command::Run {
            experiment,
            config,
            out,
            set,
        } => {
            let mut spec = match &config {
                Some(path) => ExperimentSpec::from_json_file(path)?,
                None => {
                    let name = experiment.clone().ok_or_else(|| {
                        CliError::Usage(
                            "either --experiment <name> or --config <json> is required".into(),
                        )
                    })?;
                    ExperimentSpec::new(name)
                }
            };
            if let Some(name) = experiment {
                spec.name = name;
            }
            if let Some(dir) = out {
                spec.output_dir = dir;
            }
            for assignment in &set {
                spec.overrides.set(assignment)?;
            }
            let files = run_experiment(&spec)?;
            for file in files {
                println!("{}", file.display());
            }
            Ok(())
        }
    }
}
