use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cofem::harness::{
    append_csv, emit_results, format_summary, read_csv, run_experiment, summarize, sweep,
    write_csv, write_json, ExperimentConfig, OutputFormat, ResultRecord, SweepAxis,
};
use cofem::SblError;

#[derive(Parser)]
#[command(
    name = "cofem",
    version,
    about = "Sparse Bayesian learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    #[value(name = "f")]
    F,
    #[value(name = "D")]
    D,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment per value along an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Skip axis values already present in the CSV output file.
        #[arg(long)]
        resume: bool,
    },
    /// Summarize a results CSV as a table.
    Report { input: PathBuf },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<SblError> for Failure {
    fn from(e: SblError) -> Self {
        match e {
            SblError::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            SblError::Io { .. } => Failure::Config(e.to_string()),
            other => Failure::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn write_out(records: &[ResultRecord], out: Option<&Path>, format: Format) -> Result<(), Failure> {
    match out {
        Some(path) => emit_results(records, path, format.into())?,
        None => {
            let stdout = io::stdout().lock();
            match format {
                Format::Csv => write_csv(records, stdout),
                Format::Json => write_json(records, stdout),
            }
            .map_err(|e| Failure::Runtime(e.to_string()))?
        }
    }
    Ok(())
}

fn report_failures(record: &ResultRecord) {
    for rep in &record.repetitions {
        if let Some(err) = &rep.error {
            eprintln!("repetition {} failed: {err}", rep.rep);
        }
    }
}

fn run(common: Common) -> Result<(), Failure> {
    let config = load_config(&common)?;
    let record = run_experiment(&config)?;
    report_failures(&record);
    write_out(
        std::slice::from_ref(&record),
        common.out.as_deref(),
        common.format,
    )?;
    if record.all_failed() {
        return Err(Failure::Runtime("all repetitions failed".into()));
    }
    Ok(())
}

fn run_sweep(common: Common, axis: Axis, values: Vec<usize>, resume: bool) -> Result<(), Failure> {
    let base = load_config(&common)?;
    let axis = match axis {
        Axis::F => SweepAxis::Undersampling,
        Axis::D => SweepAxis::Dimension,
    };
    for &v in &values {
        axis.apply(&base, v).validate()?;
    }

    let csv_out = match (common.format, common.out.as_deref()) {
        (Format::Csv, Some(path)) => Some(path),
        _ => None,
    };
    let mut todo = values.clone();
    if resume {
        let path = csv_out
            .ok_or_else(|| Failure::Config("--resume needs --out with --format csv".into()))?;
        if path.exists() {
            let done: Vec<usize> = read_csv(path)?
                .into_iter()
                .map(|row| match axis {
                    SweepAxis::Undersampling => row.f,
                    SweepAxis::Dimension => row.dim,
                })
                .collect();
            todo.retain(|v| !done.contains(v));
        }
    } else if let Some(path) = csv_out {
        std::fs::File::create(path).map_err(|e| SblError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }

    let mut records = Vec::new();
    let mut any_ok = todo.is_empty();
    sweep(&base, axis, &todo, |point| {
        match &point.outcome {
            Ok(record) => {
                report_failures(record);
                any_ok |= !record.all_failed();
                match (csv_out, common.format, common.out.as_deref()) {
                    (Some(path), _, _) => append_csv(record, path)?,
                    (None, Format::Json, Some(path)) => {
                        records.push(record.clone());
                        emit_results(&records, path, OutputFormat::Json)?;
                    }
                    _ => records.push(record.clone()),
                }
            }
            Err(e) => eprintln!("sweep value {} failed: {e}", point.value),
        }
        Ok(())
    })?;
    if common.out.is_none() {
        write_out(&records, None, common.format)?;
    }
    if !any_ok {
        return Err(Failure::Runtime("every sweep point failed".into()));
    }
    Ok(())
}

fn report(input: &Path) -> Result<(), Failure> {
    let rows = read_csv(input)?;
    print!("{}", format_summary(&summarize(&rows)));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common } => run(common),
        Command::Sweep {
            common,
            axis,
            values,
            resume,
        } => run_sweep(common, axis, values, resume),
        Command::Report { input } => report(&input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
