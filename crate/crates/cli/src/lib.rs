//! Command-line front end: argument parsing, command dispatch and plots.

pub mod plot;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use urllc_la::config::{parse_config, ConfigError};
use urllc_la::sweep::{read_csv, run_sweep, write_csv, RunRecord, SweepAxes};
use urllc_la::{engine, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "urllc-la", version, about = "Conservative URLLC link adaptation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration for each of its seeds.
    Run(RunArgs),
    /// Simulate the cross product of comma-separated parameter lists.
    Sweep(SweepArgs),
    /// Draw PLR, average MCS and RB usage against geometry from a sweep CSV.
    Plot(PlotArgs),
}

/// Settings shared by `run` and `sweep`. Flags override the config file.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` override, repeatable; applied after the flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub duration_s: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub geometry_db: Option<String>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub wnd: Option<String>,
    #[arg(long)]
    pub t_cqi_ms: Option<String>,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub speed_kmph: Option<String>,
    /// One seed or a comma-separated list.
    #[arg(long)]
    pub seed: Option<String>,
    /// Write the conservative estimator's state at every decision (first seed only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "LIST")]
    pub geometry_db: Option<String>,
    #[arg(long, value_name = "LIST")]
    pub policy: Option<String>,
    #[arg(long, value_name = "LIST")]
    pub wnd: Option<String>,
    #[arg(long, value_name = "LIST")]
    pub t_cqi_ms: Option<String>,
    #[arg(long, value_name = "LIST")]
    pub profile: Option<String>,
    #[arg(long, value_name = "LIST")]
    pub speed_kmph: Option<String>,
    #[arg(long, value_name = "LIST")]
    pub seed: Option<String>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Sweep CSV to read.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for the SVG files.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failures mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit code 1.
    Config(String),
    /// Anything that failed after the configuration was accepted: exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<urllc_la::Error> for CliError {
    fn from(e: urllc_la::Error) -> Self {
        match e {
            urllc_la::Error::Config(c) => c.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime<'a>(context: &str, path: &'a Path) -> impl FnOnce(io::Error) -> CliError + 'a {
    let context = context.to_string();
    move |e| CliError::Runtime(format!("{context} {}: {e}", path.display()))
}

fn split_set(item: &str) -> Result<(String, String), CliError> {
    item.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{item}`")))
}

/// Config file, then flags, then `--set` items.
fn resolve(common: &Common, flags: &[(&str, &Option<String>)]) -> Result<SimConfig, CliError> {
    let mut overrides: Vec<(String, String)> = flags
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
    if let Some(d) = &common.duration_s {
        overrides.push(("duration_s".into(), d.clone()));
    }
    for item in &common.set {
        overrides.push(split_set(item)?);
    }
    Ok(parse_config(common.config.as_deref(), &overrides)?)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(runtime("cannot create", p))?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Parses a comma-separated list, checking each item through the config
/// parser so errors read the same as for single values.
fn parse_list<T>(key: &str, list: &str, get: impl Fn(&SimConfig) -> T) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut cfg = SimConfig::default();
        cfg.set(key, item)?;
        out.push(get(&cfg));
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "--{} needs at least one value",
            key.replace('_', "-")
        )));
    }
    Ok(out)
}

pub fn cmd_run(args: &RunArgs) -> Result<Vec<RunRecord>, CliError> {
    let cfg = resolve(
        &args.common,
        &[
            ("geometry_db", &args.geometry_db),
            ("policy", &args.policy),
            ("wnd", &args.wnd),
            ("t_cqi_ms", &args.t_cqi_ms),
            ("profile", &args.profile),
            ("speed_kmph", &args.speed_kmph),
            ("seeds", &args.seed),
        ],
    )?;
    let mut records = Vec::new();
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let metrics = match (&args.trace, i) {
            (Some(path), 0) => {
                let mut f = BufWriter::new(File::create(path).map_err(runtime("cannot create", path))?);
                let m = engine::run_traced(&cfg, seed, &mut f)?;
                f.flush().map_err(runtime("cannot write", path))?;
                m
            }
            _ => engine::run(&cfg, seed)?,
        };
        records.push(RunRecord::new(&cfg, seed, &metrics));
    }
    let out = open_out(args.common.out.as_deref())?;
    write_csv(out, &records)?;
    Ok(records)
}

pub fn sweep_axes(args: &SweepArgs, base: &SimConfig) -> Result<SweepAxes, CliError> {
    let mut axes = SweepAxes::from_base(base);
    if let Some(l) = &args.geometry_db {
        axes.geometries_db = parse_list("geometry_db", l, |c| c.geometry_db)?;
    }
    if let Some(l) = &args.policy {
        axes.policies = parse_list("policy", l, |c| c.policy)?;
    }
    if let Some(l) = &args.wnd {
        axes.wnds = parse_list("wnd", l, |c| c.wnd)?;
    }
    if let Some(l) = &args.t_cqi_ms {
        axes.t_cqi_ms = parse_list("t_cqi_ms", l, |c| c.t_cqi_ms)?;
    }
    if let Some(l) = &args.profile {
        axes.profiles = parse_list("profile", l, |c| c.profile)?;
    }
    if let Some(l) = &args.speed_kmph {
        axes.speeds_kmph = parse_list("speed_kmph", l, |c| c.speed_kmph)?;
    }
    if let Some(l) = &args.seed {
        axes.seeds = parse_list("seeds", l, |c| c.seeds.clone())?.concat();
    }
    // every swept value must also pass whole-config validation
    for (cfg, _) in axes.cells(base) {
        cfg.validate()?;
    }
    Ok(axes)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<RunRecord>, CliError> {
    let base = resolve(&args.common, &[])?;
    let axes = sweep_axes(args, &base)?;
    if args.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| run_sweep(&base, &axes))?;
    let out = open_out(args.common.out.as_deref())?;
    write_csv(out, &records)?;
    Ok(records)
}

pub fn cmd_plot(args: &PlotArgs) -> Result<plot::PlotSummary, CliError> {
    let file = File::open(&args.input).map_err(runtime("cannot open", &args.input))?;
    let records = read_csv(io::BufReader::new(file)).map_err(|e| CliError::Config(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::Config(format!("{} has no rows", args.input.display())));
    }
    std::fs::create_dir_all(&args.out).map_err(runtime("cannot create", &args.out))?;
    plot::plot_records(&records, &args.out).map_err(CliError::Runtime)
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
        Command::Plot(a) => cmd_plot(a).map(|s| {
            for f in &s.files {
                eprintln!("wrote {}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
