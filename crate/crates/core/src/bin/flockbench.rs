use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flockbench::harness::{
    http_endpoint, plot_transcript, replay, report_dir, run_matrix, BackendSpec, ExperimentConfig,
    Transcript,
};

#[derive(Parser)]
#[command(
    name = "flockbench",
    version,
    about = "Run, replay, plot and report flocking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of an experiment and write transcripts.
    Run {
        /// TOML experiment document.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in scenario: circle5x5, triangle3x5, pair10, pair10-one-stationary.
        #[arg(long)]
        preset: Option<String>,
        /// Root seed; trial k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u32>,
        /// Backend for every agent: oracle, chat or scripted:<kind>.
        #[arg(long)]
        backend: Option<BackendSpec>,
        /// Output root; files go to <out>/<name>/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate a transcript and compare the regenerated trajectory.
    Replay {
        transcript: PathBuf,
        /// Also write the regenerated trajectory CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw the trajectory figure (and a `.mae.svg` companion).
    Plot {
        transcript: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize every transcript under a directory.
    Report { dir: PathBuf },
    /// Print a preset as an editable TOML document.
    Preset { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// `RUST_LOG` wins over the configured level.
fn init_logging(level: &str) {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn execute(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            config,
            preset,
            seed,
            trials,
            backend,
            out,
        } => {
            let mut config = match (config, preset) {
                (Some(path), _) => ExperimentConfig::load(&path)?,
                (None, Some(name)) => ExperimentConfig::preset(&name)?,
                (None, None) => unreachable!("clap requires one of --config/--preset"),
            };
            if let Some(seed) = seed {
                config.world.seed = seed;
            }
            if let Some(trials) = trials {
                config.world.trials = trials;
            }
            if let Some(spec) = backend {
                config.set_backend(spec);
            }
            config.validate()?;
            init_logging(&config.logging.level);
            let out = out.unwrap_or_else(|| config.logging.out_dir.clone());
            let result = run_matrix(&config, Some(&out), &mut http_endpoint)?;
            let agg = &result.aggregate;
            let counts: Vec<String> = agg
                .outcome_counts
                .iter()
                .map(|(o, n)| format!("{o}={n}"))
                .collect();
            println!(
                "{}: {} of {} trials ran, outcomes [{}], {} failed episodes",
                agg.name,
                agg.completed,
                agg.trials,
                counts.join(", "),
                agg.failed_episodes
            );
            if let Some(dir) = &result.dir {
                println!("wrote {}", dir.display());
            }
            Ok(if agg.trial_failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Replay { transcript, csv } => {
            init_logging("warn");
            let report = replay(&transcript)?;
            if let Some(path) = csv {
                std::fs::write(path, &report.replayed_csv)?;
            }
            if report.identical() {
                println!("replay identical: {} rounds", report.replayed.rounds.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("replay DIVERGED from {}", transcript.display());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Plot { transcript, out } => {
            let t = Transcript::load(&transcript)?;
            let (traj, mae) = plot_transcript(&t, &out)?;
            println!("wrote {} and {}", traj.display(), mae.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let report = report_dir(&dir)?;
            print!("{}", report.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name } => {
            print!("{}", ExperimentConfig::preset(&name)?.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}
