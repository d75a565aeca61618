use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wxverify::synthlab::{ExperimentName, ExperimentSpec};
use wxverify_cli::archive::Format;
use wxverify_cli::{resolve, run, CliError, CliResult, RunConfig, Task};

#[derive(Parser)]
#[command(name = "wxverify", version, about = "Verification and post-processing of ensemble temperature forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score an archive with the configured scores.
    Score(Common),
    /// Rank, PIT and conditional PIT histograms and CORP diagrams.
    Diagnose(Common),
    /// Lapse-rate correction, EMOS, ECC and a climatology reference.
    Postprocess {
        #[command(flatten)]
        common: Common,
        /// Station metadata CSV.
        #[arg(long)]
        stations: Option<PathBuf>,
    },
    /// Run a synthetic experiment (fig1, fig2, fig3, propriety, impropriety).
    Synth {
        experiment: Option<ExperimentName>,
        #[command(flatten)]
        common: Common,
        /// Number of cases.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Compare systems and compute skill against a reference.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration, or the manifest of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Archive to read (score, diagnose, postprocess).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Archive format: csv or jsonl.
    #[arg(long)]
    format: Option<Format>,
}

fn load(task: Task, common: &Common) -> CliResult<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(task),
    };
    if config.task != task {
        return Err(CliError::Usage(format!("configuration is for task {}, not {}", config.task.as_str(), task.as_str())));
    }
    if let Some(i) = &common.input {
        config.input = Some(i.clone());
    }
    Ok(config)
}

fn execute(cli: Cli) -> CliResult<()> {
    let (config, common) = match cli.command {
        Command::Score(c) => (load(Task::Score, &c)?, c),
        Command::Diagnose(c) => (load(Task::Diagnose, &c)?, c),
        Command::Report(c) => (load(Task::Report, &c)?, c),
        Command::Postprocess { common, stations } => {
            let mut config = load(Task::Postprocess, &common)?;
            if stations.is_some() {
                config.stations = stations;
            }
            (config, common)
        }
        Command::Synth { experiment, common, n } => {
            let mut config = load(Task::Synth, &common)?;
            if let Some(name) = experiment {
                if config.experiment.as_ref().is_none_or(|e| e.name != name) {
                    config.experiment = Some(ExperimentSpec::new(name));
                }
            }
            let spec = config.experiment.as_mut().ok_or_else(|| CliError::Usage("synth needs an experiment name or a config".into()))?;
            if let Some(n) = n {
                spec.n = n;
            }
            (config, common)
        }
    };
    let config = resolve(config, common.out, common.seed, common.format)?;
    let summary = run(&config)?;
    println!("{}", summary.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "exit_code": e.exit_code(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
