//! `popmarket` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use popmarket::config::{config_to_json, parse_config, ConfigError};
use popmarket::experiment::{cell_realizations, with_workers};
use popmarket::output::{write_grid_csv, write_trace_csv, RunManifest};
use popmarket::{run_grid, summarize_runs, SweepConfig, TraceSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "popmarket", version, about = "Quality vs. popularity cultural-market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single (alpha, beta) cell and print its outcome
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of most popular items of the first run to list
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Run the (alpha, beta) grid and write grid.csv and manifest.json
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Run the grid with quality tracing and write trace.csv as well
    Trace {
        #[command(flatten)]
        common: Common,
    },
    /// Resolve the config, print it with defaults applied, run nothing
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides `master_seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, env = "POPMARKET_WORKERS", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
    /// Config override, e.g. `--set betas=[0,0.5] --set trace.points=10`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<SweepConfig, ConfigError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("master_seed={seed}"));
        }
        parse_config(self.config.as_deref(), &overrides)
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate { common, top } => simulate(common, *top, out),
        Command::Sweep { common } => sweep(common, false, out),
        Command::Trace { common } => sweep(common, true, out),
        Command::Validate { common } => validate(common, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(err, "config error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn workers(common: &Common) -> usize {
    common
        .workers
        .map(usize::from)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn validate(common: &Common, out: &mut dyn Write) -> Result<(), Failure> {
    let config = common.load()?;
    writeln!(out, "{}", config_to_json(&config)).map_err(Failure::runtime)
}

fn simulate(common: &Common, top: usize, out: &mut dyn Write) -> Result<(), Failure> {
    let config = common.load()?;
    if config.n_cells() != 1 {
        return Err(Failure::Config(format!(
            "`simulate` runs one cell; `alphas` has {} and `betas` has {} values",
            config.alphas.len(),
            config.betas.len()
        )));
    }
    let runs = with_workers(workers(common), || cell_realizations(&config, 0, 0))
        .and_then(|r| r)
        .map_err(Failure::runtime)?;
    let s = summarize_runs(&runs, config.alphas[0], config.betas[0]).map_err(Failure::runtime)?;

    let first = &runs[0];
    let mut ranked: Vec<usize> = (0..first.popularity.len()).collect();
    ranked.sort_by(|&a, &b| first.popularity[b].cmp(&first.popularity[a]).then(a.cmp(&b)));

    let mut text = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(
        text,
        "alpha={} beta={} n_items={} steps={} n_runs={} seed={}",
        s.alpha, s.beta, config.n_items, config.steps, s.n_runs, config.master_seed
    );
    let _ = writeln!(text, "mean_q: {:.6} (stderr {:.6})", s.mean_q, s.stderr_q);
    let _ = writeln!(text, "mean_tau: {:.6} (stderr {:.6})", s.mean_tau, s.stderr_tau);
    let _ = writeln!(text, "top {} items of run 0:", top.min(ranked.len()));
    let _ = writeln!(text, "  rank  item  popularity  quality");
    for (k, &item) in ranked.iter().take(top).enumerate() {
        let _ = writeln!(
            text,
            "  {:>4}  {:>4}  {:>10}  {:.4}",
            k + 1,
            item,
            first.popularity[item],
            first.qualities[item]
        );
    }
    out.write_all(text.as_bytes()).map_err(Failure::runtime)
}

fn sweep(common: &Common, traced: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let mut config = common.load()?;
    if traced && config.trace.is_none() {
        config.trace = Some(TraceSpec::default());
        config.validate()?;
    }
    let mut manifest = RunManifest::start(&config);
    let grid = with_workers(workers(common), || run_grid(&config))
        .and_then(|g| g)
        .map_err(Failure::runtime)?;

    let dir = &common.out;
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = vec!["grid.csv".to_owned()];
    write_grid_csv(&grid, &dir.join("grid.csv")).map_err(Failure::runtime)?;
    if traced {
        write_trace_csv(&grid, &dir.join("trace.csv")).map_err(Failure::runtime)?;
        files.push("trace.csv".to_owned());
    }
    manifest.finish(files.clone());
    manifest
        .write(&dir.join("manifest.json"))
        .map_err(Failure::runtime)?;

    for f in &files {
        writeln!(out, "wrote {}", dir.join(f).display()).map_err(Failure::runtime)?;
    }
    writeln!(out, "wrote {}", dir.join("manifest.json").display()).map_err(Failure::runtime)
}
