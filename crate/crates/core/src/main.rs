use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use qmetro::config::{parse_config, ExperimentKind};
use qmetro::experiment::{run, write_outputs, OutputPaths};
use qmetro::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Evolve,
    Qfi,
    Nonmarkov,
    Steady,
    FiCompare,
    Coherence,
    Sweep,
}

impl From<Experiment> for ExperimentKind {
    fn from(e: Experiment) -> Self {
        match e {
            Experiment::Evolve => ExperimentKind::Evolve,
            Experiment::Qfi => ExperimentKind::Qfi,
            Experiment::Nonmarkov => ExperimentKind::Nonmarkov,
            Experiment::Steady => ExperimentKind::Steady,
            Experiment::FiCompare => ExperimentKind::FiCompare,
            Experiment::Coherence => ExperimentKind::Coherence,
            Experiment::Sweep => ExperimentKind::Sweep,
        }
    }
}

/// Run a probe-ancilla experiment described by a JSON config and write its
/// CSV plus a JSON run summary.
#[derive(Debug, Parser)]
#[command(name = "qmetro", version)]
struct Cli {
    experiment: Experiment,

    #[arg(long)]
    config: PathBuf,

    /// CSV destination; the summary goes next to it as `<stem>.summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (falls back to QMETRO_THREADS).
    #[arg(long, env = "QMETRO_THREADS")]
    threads: Option<usize>,

    /// Override after parsing, e.g. `--param g=0.09` or `--param interaction=XZ`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn execute(cli: &Cli) -> Result<OutputPaths, Error> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| Error::Config {
        key: "--config".into(),
        line: 0,
        detail: format!("cannot read {}: {e}", cli.config.display()),
    })?;
    let mut config = parse_config(&text, Some(cli.experiment.into()))?;
    for assignment in &cli.params {
        config.apply_override(assignment)?;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config {
                key: "--threads".into(),
                line: 0,
                detail: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Io(format!("thread pool: {e}")))?;
    }
    let paths = OutputPaths::resolve(cli.out.as_deref(), &config);
    let output = run(&config)?;
    write_outputs(&output, &paths)?;
    log::info!(
        "{} rows in {:.3} s; counters {:?}",
        output.table.rows.len(),
        output.wall_time.as_secs_f64(),
        output.counters
    );
    Ok(paths)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(paths) => {
            println!("{}", paths.csv.display());
            println!("{}", paths.summary.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qmetro: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
