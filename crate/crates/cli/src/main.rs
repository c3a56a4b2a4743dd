use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pathdev_cli::{list_catalog, load_config, run_scenario, write_record, CliError, Overrides, OUTPUT_DIR_ENV, TASKS};

#[derive(Parser)]
#[command(name = "pathdev", version, about = "Transport, displacement and deviation computations on manifolds with a connection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct IntegratorArgs {
    /// Override `integrator.step`.
    #[arg(long)]
    step: Option<f64>,
    /// Override `integrator.quad_panels`.
    #[arg(long)]
    quad_panels: Option<usize>,
    /// Override `integrator.fd_step`.
    #[arg(long)]
    fd_step: Option<f64>,
}

impl IntegratorArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            step: self.step,
            quad_panels: self.quad_panels,
            fd_step: self.fd_step,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write `<name>.csv` and `<name>.json`.
    Run {
        config: PathBuf,
        /// Output directory (default: `output.path`, then $PATHDEV_OUTPUT_DIR, then `.`).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Validate a scenario without running it.
    Check {
        config: PathBuf,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// List built-in manifolds and task kinds.
    Catalog {
        #[arg(long)]
        json: bool,
    },
}

fn load(path: &Path, args: &IntegratorArgs) -> Result<pathdev_cli::ScenarioConfig, CliError> {
    let mut cfg = load_config(path)?;
    cfg.apply(&args.overrides());
    cfg.validate()?;
    Ok(cfg)
}

fn run(path: &Path, output: Option<PathBuf>, args: &IntegratorArgs) -> Result<(), CliError> {
    let cfg = load(path, args)?;
    let dir = output
        .or_else(|| cfg.output.path.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = cfg
        .output
        .name
        .clone()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "scenario".into());
    let outcome = run_scenario(&cfg)?;
    let written = write_record(&outcome.record, &dir, &stem, cfg.output.format)?;
    if let Some(csv) = &written.csv {
        println!("{}", csv.display());
    }
    println!("{}", written.sidecar.display());
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            integrator,
        } => run(&config, output, &integrator),
        Command::Check { config, integrator } => load(&config, &integrator).map(|cfg| {
            println!("ok: {} task on `{}` ({})", cfg.task.name(), config.display(), cfg.hash());
        }),
        Command::Catalog { json } => {
            let entries = list_catalog();
            if json {
                println!("{}", serde_json::to_string_pretty(&entries).expect("json"));
            } else {
                for e in &entries {
                    let dim = e.dim.map_or("n".to_string(), |d| d.to_string());
                    let params = if e.params.is_empty() { "-".to_string() } else { e.params.join(", ") };
                    println!("{:<18} dim {:<3} params {:<24} {}", e.name, dim, params, e.description);
                }
                println!("tasks: {}", TASKS.join(", "));
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
