//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentKind, RunConfig};
use crate::error::Result;
use crate::experiment::{generate_data, run_beta_sweep, run_estimator_compare, run_experiment};
use crate::plot::emit_plots;

#[derive(Parser, Debug)]
#[command(
    name = "infoplane",
    version,
    about = "Information-plane experiments for VIB students of a VAE teacher"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. `student.beta=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the teacher VAE only and save its checkpoint.
    TrainTeacher(ConfigArgs),
    /// Run the experiment named in the config.
    Run(ConfigArgs),
    /// Run a beta sweep.
    Sweep(ConfigArgs),
    /// Run the estimator comparison and write its report.
    Compare(ConfigArgs),
    /// Re-render the SVG plots of a run directory from its trajectory.csv.
    Plot {
        #[arg(value_name = "RUN_DIR")]
        dir: PathBuf,
    },
    /// Write the datasets a run would use as IDX files with JSON sidecars.
    GenData(ConfigArgs),
    /// Parse and validate a config, printing the resolved form.
    ValidateConfig(ConfigArgs),
}

impl ConfigArgs {
    fn resolve(&self, experiment: Option<ExperimentKind>) -> Result<RunConfig> {
        let mut overrides = Vec::new();
        if let Some(kind) = experiment {
            let name = serde_json::to_value(kind).expect("kind serializes");
            overrides.push(format!("experiment={name}"));
        }
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            let path = serde_json::to_string(&out.display().to_string()).expect("path serializes");
            overrides.push(format!("output_dir={path}"));
        }
        overrides.extend(self.set.iter().cloned());
        RunConfig::load(&self.config, &overrides)
    }
}

fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::TrainTeacher(args) => {
            let cfg = args.resolve(Some(ExperimentKind::TrainTeacherOnly))?;
            let run = run_experiment(&cfg)?;
            Ok(format!(
                "teacher saved under {}",
                run.dir.join("checkpoints").display()
            ))
        }
        Command::Run(args) => {
            let cfg = args.resolve(None)?;
            if cfg.experiment == ExperimentKind::BetaSweep {
                let sweep = run_beta_sweep(&cfg)?;
                return Ok(format!(
                    "sweep of {} runs written to {}",
                    sweep.runs.len(),
                    sweep.dir.display()
                ));
            }
            let run = run_experiment(&cfg)?;
            Ok(format!(
                "{} epochs written to {}",
                run.points.len(),
                run.dir.display()
            ))
        }
        Command::Sweep(args) => {
            let cfg = args.resolve(Some(ExperimentKind::BetaSweep))?;
            let sweep = run_beta_sweep(&cfg)?;
            Ok(format!(
                "sweep of {} runs written to {}",
                sweep.runs.len(),
                sweep.dir.display()
            ))
        }
        Command::Compare(args) => {
            let cfg = args.resolve(Some(ExperimentKind::EstimatorCompare))?;
            let (run, report) = run_estimator_compare(&cfg)?;
            Ok(format!(
                "{}report written to {}",
                report.to_text(),
                run.dir.display()
            ))
        }
        Command::Plot { dir } => {
            emit_plots(&dir)?;
            Ok(format!("plots written to {}", dir.display()))
        }
        Command::GenData(args) => {
            let cfg = args.resolve(None)?;
            let dir = generate_data(&cfg)?;
            Ok(format!("datasets written to {}", dir.display()))
        }
        Command::ValidateConfig(args) => Ok(args.resolve(None)?.to_json()),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
