//! `ordheck` command-line front end. Subcommands return exit codes
//! 0 (success), 2 (configuration), 3 (data) and 4 (numeric failure).

mod config;
mod fit;
mod format;
mod ivtest;
mod simulate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{BinarizeKind, CovarianceKind, EstimatorKind, FitConfig, IvConfig, SimConfig};
pub use format::sig4;

#[derive(Debug, Parser)]
#[command(name = "ordheck", version, about = "Ordered-probit sample-selection models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator to a CSV file described by a TOML config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Directory for the markdown table, CSV and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a Monte Carlo study and write its table.
    Simulate {
        #[arg(value_enum)]
        study: StudyArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Bootstrap test of a binarized exclusion restriction.
    Ivtest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bootstrap draws, overriding the config.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    #[value(name = "I", alias = "1", alias = "i")]
    I,
    #[value(name = "II", alias = "2", alias = "ii")]
    II,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<ordheck::Error> for CliError {
    fn from(e: ordheck::Error) -> Self {
        use ordheck::Error as E;
        match e {
            E::InvalidArgument(_) => CliError::Config(e.to_string()),
            E::Data(_) | E::RankDeficient { .. } | E::Csv(_) | E::Io(_) => CliError::Data(e.to_string()),
            E::Domain(_) | E::Singular { .. } | E::Numeric(_) | E::Underflow { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
struct Manifest {
    subcommand: String,
    args: Vec<String>,
    config: Option<String>,
    seed: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: String,
    wall_time_seconds: f64,
    exit_code: i32,
}

/// Output sink: a directory, or standard output for the markdown table.
pub(crate) struct Outputs {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| CliError::Config(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self { dir, written: Vec::new() })
    }

    /// Writes `name` into the output directory; markdown also goes to
    /// standard output when there is no directory.
    pub(crate) fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                std::fs::write(&path, content)
                    .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
                self.written.push(path);
            }
            None if name.ends_with(".md") => print!("{content}"),
            None => {}
        }
        Ok(())
    }
}

pub(crate) fn report(line: &str) {
    eprintln!("{line}");
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let started = Instant::now();
    let (name, config, seed, inputs, out, threads) = match &cli.command {
        Command::Fit { config, data, out, seed, threads } => {
            ("fit", Some(config.clone()), *seed, vec![data.clone()], out.clone(), *threads)
        }
        Command::Simulate { config, out, seed, threads, .. } => ("simulate", config.clone(), *seed, vec![], out.clone(), *threads),
        Command::Ivtest { config, data, out, seed, threads, .. } => {
            ("ivtest", Some(config.clone()), *seed, vec![data.clone()], out.clone(), *threads)
        }
    };
    if let Some(t) = threads {
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let mut outputs = match Outputs::new(out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Fit { config, data, .. } => fit::cmd_fit(&config, &data, &mut outputs),
        Command::Simulate { study, config, seed, reps, .. } => {
            let study = match study {
                StudyArg::I => ordheck::sim::Study::I,
                StudyArg::II => ordheck::sim::Study::II,
            };
            simulate::cmd_simulate(study, config.as_deref(), seed, reps, &mut outputs)
        }
        Command::Ivtest { config, data, seed, reps, .. } => ivtest::cmd_ivtest(&config, &data, seed, reps, &mut outputs),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    let manifest = Manifest {
        subcommand: name.into(),
        args: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        config: config.as_deref().map(display),
        seed,
        inputs: inputs.iter().map(|p| display(p)).collect(),
        outputs: outputs.written.iter().map(|p| display(p)).collect(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        exit_code: code,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    match &outputs.dir {
        Some(d) => {
            if let Err(e) = std::fs::write(d.join("manifest.json"), json + "\n") {
                eprintln!("cannot write manifest: {e}");
            }
        }
        None => report(&format!("event=manifest {}", serde_json::to_string(&manifest).expect("manifest serializes"))),
    }
    code
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
