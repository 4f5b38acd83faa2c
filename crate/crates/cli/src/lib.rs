//! Command-line front end: capacity reports, simulation runs and log replay.
//!
//! Exit codes: 0 success, 1 replay divergence, 2 bad configuration or input,
//! 3 capacity exceeded without `--allow-overload`, 4 I/O failure.

pub mod output;
pub mod replay;
pub mod scenario;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use v2x_ledger::phy::{overhead_fraction, CapacityReport, McsTable, Numerology, PhyConfig, SubchannelSizing};
use v2x_ledger::sim::{run_ensemble, MetricsTrace, SimError};

use crate::replay::{EventLog, Verdict};
use crate::scenario::{parse_seeds, ModeName, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed event log at line {line}: {message}")]
    MalformedLog { line: usize, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MalformedLog { .. } => 2,
            CliError::Capacity(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::CapacityExceeded { .. } => CliError::Capacity(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Parser)]
#[command(name = "v2x-ledger", version, about = "NR-V2X Mode 2 SPS and Ledger simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resource dimensioning for one package size.
    Capacity(CapacityArgs),
    /// Run a Monte Carlo experiment from a scenario file.
    Simulate(SimulateArgs),
    /// Check a trace against the occupancy log it was produced with.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizingArg {
    ExactFit,
    Standard,
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    /// Numerology index (0-3).
    #[arg(long, default_value_t = 0)]
    pub mu: u8,
    /// Package size in bytes.
    #[arg(long, default_value_t = 350)]
    pub payload: u32,
    /// MCS table index.
    #[arg(long, default_value_t = 1)]
    pub mcs: u8,
    /// Resource reservation interval in ms.
    #[arg(long, default_value_t = 100)]
    pub rri: u32,
    /// Package size the overhead is measured against.
    #[arg(long, default_value_t = 300)]
    pub baseline_payload: u32,
    /// MCS table file replacing the bundled one.
    #[arg(long)]
    pub mcs_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SizingArg::ExactFit)]
    pub sizing: SizingArg,
    #[arg(long, default_value_t = 12)]
    pub subcarriers_per_rb: u32,
    #[arg(long, default_value_t = 12)]
    pub sh_symbols: u32,
    #[arg(long, default_value_t = 0)]
    pub pfsch_symbols: u32,
    #[arg(long, default_value_t = 0)]
    pub overhead_re: u32,
    #[arg(long, default_value_t = 12)]
    pub dmrs_re: u32,
}

impl Default for CapacityArgs {
    fn default() -> Self {
        Cli::parse_from(["v2x-ledger", "capacity"]).command.into_capacity().expect("capacity subcommand")
    }
}

impl Command {
    fn into_capacity(self) -> Option<CapacityArgs> {
        match self {
            Command::Capacity(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the scenario mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Overrides the scenario seeds, e.g. `1-30` or `1,5,9`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Trace output file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    #[arg(long)]
    pub allow_overload: bool,
    /// Also write the occupancy log next to the trace (`.events`).
    #[arg(long)]
    pub log_events: bool,
    /// Also write a gnuplot script next to the trace (`.gp`).
    #[arg(long)]
    pub plot_script: bool,
    /// Write the effective scenario, defaults filled in, to this file.
    #[arg(long)]
    pub emit_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Ledger,
    Both,
}

impl From<ModeArg> for ModeName {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => ModeName::Baseline,
            ModeArg::Ledger => ModeName::Ledger,
            ModeArg::Both => ModeName::Both,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Occupancy log written by `simulate --log-events`.
    #[arg(long)]
    pub events: PathBuf,
    /// Trace to check; defaults to the one named in the log header.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn cmd_capacity(args: &CapacityArgs) -> Result<String, CliError> {
    let cfg_err = |e: v2x_ledger::phy::CapacityError| CliError::Config(e.to_string());
    let num = Numerology::from_mu(args.mu).map_err(cfg_err)?;
    let table = match &args.mcs_table {
        Some(p) => McsTable::load(p).map_err(cfg_err)?,
        None => McsTable::bundled(),
    };
    let mcs = table.lookup(args.mcs).map_err(cfg_err)?;
    let phy = PhyConfig {
        subcarriers_per_rb: args.subcarriers_per_rb,
        sh_symbols: args.sh_symbols,
        pfsch_symbols: args.pfsch_symbols,
        overhead_re: args.overhead_re,
        dmrs_re: args.dmrs_re,
        sizing: match args.sizing {
            SizingArg::ExactFit => SubchannelSizing::ExactFit,
            SizingArg::Standard => SubchannelSizing::Standard,
        },
    };
    let report = CapacityReport::compute(num, args.payload, mcs, &phy, args.rri).map_err(cfg_err)?;
    let base = CapacityReport::compute(num, args.baseline_payload, mcs, &phy, args.rri).map_err(cfg_err)?;

    let opt = |v: Option<u32>| v.map_or_else(|| "n/a".to_string(), |v| v.to_string());
    let mut out = String::new();
    let _ = writeln!(out, "numerology            mu={} scs={}kHz", num.mu, num.scs_khz);
    let _ = writeln!(out, "rri_ms                {}", args.rri);
    let _ = writeln!(
        out,
        "mcs                   index={} order={} efficiency={}",
        mcs.index, mcs.modulation_order, mcs.spectral_efficiency
    );
    let _ = writeln!(out, "payload_bytes         {}", report.payload_bytes);
    let _ = writeln!(out, "re_per_prb            {}", report.re_per_prb);
    let _ = writeln!(out, "res_per_package       {}", report.res_per_package);
    let _ = writeln!(out, "prbs_per_package      {}", report.prbs_per_package);
    let _ = writeln!(out, "prbs_per_slot         {}", report.prbs_per_slot);
    let _ = writeln!(out, "subchannel_prbs       {}", opt(report.subchannel_prbs));
    let _ = writeln!(out, "subchannels_per_slot  {}", opt(report.subchannels_per_slot));
    let _ = writeln!(out, "max_vehicles          {}", opt(report.max_vehicles));
    let _ = writeln!(out, "baseline_payload      {}", base.payload_bytes);
    let _ = writeln!(out, "baseline_prbs         {}", base.prbs_per_package);
    let _ = writeln!(out, "baseline_subchannels  {}", opt(base.subchannels_per_slot));
    let _ = writeln!(out, "baseline_max_vehicles {}", opt(base.max_vehicles));
    let overhead = match (report.max_vehicles, base.max_vehicles) {
        (Some(c), Some(b)) => overhead_fraction(c, b).map_or_else(|_| "n/a".to_string(), |o| format!("{o:.6}")),
        _ => "n/a".to_string(),
    };
    let _ = writeln!(out, "overhead              {overhead}");
    Ok(out)
}

/// What a simulate run produced.
#[derive(Debug)]
pub struct SimulateOutcome {
    pub traces: Vec<MetricsTrace>,
    pub written: Vec<PathBuf>,
}

impl SimulateOutcome {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for t in &self.traces {
            let (mean, hits) = t.mean_convergence_rri();
            let _ = write!(out, "{}: {}/{} seeds converged", t.mode.as_str(), hits, t.n_seeds());
            if hits > 0 {
                let _ = write!(out, ", mean convergence RRI {mean:.2}");
            }
            out.push('\n');
        }
        for p in &self.written {
            let _ = writeln!(out, "wrote {}", p.display());
        }
        out
    }
}

/// Builds the effective scenario from the file plus flag overrides.
pub fn effective_scenario(args: &SimulateArgs) -> Result<Scenario, CliError> {
    let mut s = Scenario::load(&args.config)?;
    if let Some(m) = args.mode {
        s.mode = m.into();
    }
    if let Some(seeds) = &args.seeds {
        s.seeds = parse_seeds(seeds).map_err(CliError::Config)?;
    }
    s.allow_overload |= args.allow_overload;
    s.log_events |= args.log_events;
    Ok(s)
}

fn sibling(out: &Path, ext: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(ext);
    out.with_file_name(name)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutcome, CliError> {
    let scenario = effective_scenario(args)?;
    let cfg = scenario.to_sim_config()?;
    if cfg.seeds.is_empty() {
        return Err(SimError::NoSeeds.into());
    }
    cfg.validate()?;

    let traces = cfg
        .mode
        .modes()
        .iter()
        .map(|&m| run_ensemble(&cfg, m))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = output::rows(&traces);
    let body = match args.format {
        FormatArg::Csv => output::to_csv(&rows),
        FormatArg::Json => output::to_json(&rows),
    };
    let mut written = Vec::new();
    write_file(&args.out, &body)?;
    written.push(args.out.clone());

    let trace_name = args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if cfg.log_events {
        let path = sibling(&args.out, "events");
        write_file(&path, &output::event_log(&traces, cfg.num_rris, &trace_name))?;
        written.push(path);
    }
    if args.plot_script {
        let path = sibling(&args.out, "gp");
        let modes: Vec<&str> = traces.iter().map(|t| t.mode.as_str()).collect();
        write_file(&path, &output::plot_script(&trace_name, &modes))?;
        written.push(path);
    }
    if let Some(path) = &args.emit_config {
        write_file(path, &scenario.to_toml())?;
        written.push(path.clone());
    }
    Ok(SimulateOutcome { traces, written })
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<Verdict, CliError> {
    let log = EventLog::parse(&read_file(&args.events)?)?;
    let trace_path = match (&args.trace, &log.trace_file) {
        (Some(p), _) => p.clone(),
        (None, Some(name)) => args.events.with_file_name(name),
        (None, None) => return Err(CliError::Config("no --trace given and the log names none".into())),
    };
    let rows = replay::parse_trace(&read_file(&trace_path)?)?;
    Ok(replay::compare(&log, &rows))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Capacity(a) => cmd_capacity(&a).map(|s| {
            print!("{s}");
            0
        }),
        Command::Simulate(a) => cmd_simulate(&a).map(|o| {
            print!("{}", o.summary());
            0
        }),
        Command::Replay(a) => cmd_replay(&a).map(|v| {
            println!("{v}");
            i32::from(v != Verdict::Consistent)
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
