use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nlgrad::pipeline::{cmd_analyze, cmd_report, cmd_simulate, cmd_train_baseline, AnalyzeOptions, ReportFormat};
use nlgrad::Error;

#[derive(Parser)]
#[command(name = "nlgrad", version, about = "Nonlinearity detection from neural-model input gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the acceleration records of every state.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select the lag and train the per-floor baseline models.
    TrainBaseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recalibrate per state and compute gradient metrics.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of roster states.
        #[arg(long, value_delimiter = ',')]
        states: Option<Vec<String>>,
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Summarize a completed run.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, out } => {
            let m = cmd_simulate(&config, out.as_deref())?;
            println!("simulated {} states", m.states.len());
        }
        Command::TrainBaseline { config, out } => {
            let m = cmd_train_baseline(&config, out.as_deref())?;
            if let Some(b) = &m.baseline {
                println!("selected lag {}", b.lag);
            }
            for f in &m.nmse_flags {
                println!("warning: {} dof{} NMSE {:.3}% over the limit", f.state, f.dof, f.nmse);
            }
        }
        Command::Analyze {
            config,
            out,
            states,
            max_points,
        } => {
            let m = cmd_analyze(&config, &AnalyzeOptions { out, states, max_points })?;
            if let Some(a) = &m.analysis {
                println!("metric table: {}", a.metrics_csv);
            }
            for f in m.nmse_flags.iter().filter(|f| f.stage == "analyze") {
                println!("warning: {} dof{} NMSE {:.3}% over the limit", f.state, f.dof, f.nmse);
            }
        }
        Command::Report { manifest, format } => {
            let report = cmd_report(&manifest)?;
            let format = match format {
                Format::Table => ReportFormat::Table,
                Format::Csv => ReportFormat::Csv,
            };
            print!("{}", report.render(format));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
