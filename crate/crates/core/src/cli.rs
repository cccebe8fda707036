//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 physically infeasible,
//! 3 unsupported configuration (both impacts non-before under the default
//! policy). Failures print one JSON line `{"error": kind, "message": ...}`
//! on stderr.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_any, ResolvedConfig};
use crate::error::{Error, Result};
use crate::feasibility::{self, FixedParams, SweepAxis};
use crate::manifest::{write_record_line, RunManifest, RECORDS_HEADER, SCAN_HEADER, SWEEP_HEADER};
use crate::relativity::{time_difference_in_frame, threshold_velocity, ImpactClass};
use crate::simulation::{
    build_impact_contexts, model_distribution, nominal_class, run_trials, run_trials_with_records, Model,
};
use crate::statistics::estimate_correlation;

#[derive(Debug, Parser)]
#[command(name = "movingbs", version, about = "Moving beam-splitter correlation simulator and feasibility planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo and write a JSON run manifest.
    Simulate(SimulateArgs),
    /// Classify the zero-jitter impacts of a configuration.
    Classify(ClassifyArgs),
    /// Solve or sweep the timing-window bound V·L/c².
    Feasibility(FeasibilityArgs),
    /// Simulate both models over an angle grid and write a CSV.
    Scan(ScanArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Qm,
    Ad,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Qm => Model::Qm,
            ModelArg::Ad => Model::Ad,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunOverrides {
    /// Number of trials [default: from config]
    #[arg(long)]
    pub trials: Option<u64>,
    /// RNG seed [default: from config]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it [default: available cores]
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config, or a JSON manifest from a previous run
    pub config: PathBuf,
    /// Model to sample [default: from config, else qm]
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[command(flatten)]
    pub run: RunOverrides,
    /// Write per-trial records as CSV to this path
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Write the manifest here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp so identical runs give identical bytes
    #[arg(long)]
    pub canonical: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    pub config: PathBuf,
    /// Accepted for uniformity; classification draws no random numbers
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FeasibilityArgs {
    /// Splitter 2 velocity, m/s
    #[arg(long = "V")]
    pub velocity: Option<f64>,
    /// Total separation L = L1 + L2, m
    #[arg(long = "L")]
    pub total_length: Option<f64>,
    /// Path delay, s
    #[arg(long = "delta-t")]
    pub delta_t: Option<f64>,
    /// Emission delay, s
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Sweep spec AXIS:START:STOP:STEP or AXIS:V1,V2,... with AXIS in {V, L, delta_t}
    #[arg(long)]
    pub sweep: Option<String>,
    /// Write the sweep CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; feasibility draws no random numbers
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub config: PathBuf,
    /// Grid in degrees: alpha=START:STOP:STEP,beta=START:STOP:STEP; either axis may be a
    /// single value, and beta may be `alpha` or `-alpha` to pair the axes
    #[arg(long = "angle-grid")]
    pub angle_grid: String,
    #[command(flatten)]
    pub run: RunOverrides,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command, and maps failures onto exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Infeasible(_) | Error::DegenerateGeometry(_) => 2,
        Error::UnsupportedConfiguration { .. } => 3,
        _ => 1,
    }
}

pub fn run<W: Write>(command: Command, out: &mut W) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(&args, out),
        Command::Classify(args) => classify(&args, out),
        Command::Feasibility(args) => feasibility(&args, out),
        Command::Scan(args) => scan(&args, out),
    }
}

fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_any(&text)
}

fn apply_overrides(cfg: &mut ResolvedConfig, run: &RunOverrides) -> Result<usize> {
    if let Some(trials) = run.trials {
        if trials == 0 {
            return Err(Error::Config("--trials must be >= 1".into()));
        }
        cfg.simulation.trials = trials;
    }
    if let Some(seed) = run.seed {
        cfg.simulation.seed = seed;
    }
    let workers = run
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        return Err(Error::Config("--workers must be >= 1".into()));
    }
    Ok(workers)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate<W: Write>(args: &SimulateArgs, out: &mut W) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    let workers = apply_overrides(&mut cfg, &args.run)?;
    if let Some(model) = args.model {
        cfg.simulation.model = model.into();
    }

    let counts = match &args.records {
        Some(path) => {
            let mut csv = create(path)?;
            writeln!(csv, "{RECORDS_HEADER}")?;
            let counts = run_trials_with_records(&cfg.simulation, workers, |r| Ok(write_record_line(&mut csv, r)?))?;
            csv.flush()?;
            counts
        }
        None => run_trials(&cfg.simulation, workers)?,
    };

    let timestamp = (!args.canonical).then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let manifest = RunManifest::build(&cfg, &counts, timestamp)?;
    let json = manifest.to_json();
    match &args.out {
        Some(path) => fs::write(path, json)?,
        None => out.write_all(json.as_bytes())?,
    }
    Ok(())
}

fn classify<W: Write>(args: &ClassifyArgs, out: &mut W) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let sim = &cfg.simulation;
    let g = &sim.geometry;
    let (first, second) = build_impact_contexts(g, (0.0, 0.0), sim.distinguishability)?;
    let class = nominal_class(sim)?;
    let dt1 = time_difference_in_frame(&first.event, &second.event, &first.frame)?;
    let dt2 = time_difference_in_frame(&second.event, &first.event, &second.frame)?;
    let lead = second.event.t - first.event.t;
    let separation = second.event.x - first.event.x;

    writeln!(out, "class = {class}")?;
    writeln!(out, "dt_frame1 = {dt1:e} s  (T1 - T2 in the splitter-1 frame)")?;
    writeln!(out, "dt_frame2 = {dt2:e} s  (T2 - T1 in the splitter-2 frame)")?;
    writeln!(
        out,
        "threshold_velocity = {:.6} m/s  (splitter 2 impact is before above this)",
        threshold_velocity(lead, separation)
    )?;
    if class == crate::relativity::ExperimentClass(ImpactClass::NonBefore, ImpactClass::NonBefore) {
        writeln!(
            out,
            "warning: both impacts are non-before; the AD prediction is unspecified here (policy = {})",
            sim.nonbefore_policy
        )?;
    }
    Ok(())
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("not a number: {s:?}")))
}

/// `START:STOP:STEP`, a comma list, or a single value.
fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => feasibility::range_values(parse_number(start)?, parse_number(stop)?, parse_number(step)?)
            .map_err(|e| Error::Config(e.to_string()))?,
        [list] => list.split(',').map(parse_number).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Config(format!("bad range {spec:?}, expected START:STOP:STEP"))),
    };
    if values.is_empty() {
        return Err(Error::Config(format!("range {spec:?} is empty")));
    }
    Ok(values)
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn feasibility<W: Write>(args: &FeasibilityArgs, out: &mut W) -> Result<()> {
    if let Some(spec) = &args.sweep {
        let (axis, range) = spec
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad sweep {spec:?}, expected AXIS:START:STOP:STEP")))?;
        let axis: SweepAxis = axis.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let inputs = parse_values(range)?;
        let params = FixedParams {
            velocity: args.velocity,
            total_length: args.total_length,
            delta_t: args.delta_t,
            tau: args.tau,
        };
        let rows = feasibility::sweep(axis, &inputs, &params).map_err(|e| Error::Config(e.to_string()))?;
        let mut text = format!("{SWEEP_HEADER}\n");
        for row in rows {
            text.push_str(&format!("{:e},{},{}\n", row.input, fmt_opt(row.value), row.feasible));
        }
        return match &args.out {
            Some(path) => Ok(fs::write(path, text)?),
            None => Ok(out.write_all(text.as_bytes())?),
        };
    }

    let length = args
        .total_length
        .ok_or_else(|| Error::Config("--L is required".into()))?;
    match (args.velocity, args.delta_t) {
        (Some(v), None) => {
            let bound = feasibility::max_delay(v, length).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(out, "delta_t_max = {bound:.3e} s")?;
        }
        (None, Some(dt)) => {
            let v = match feasibility::required_velocity(dt, args.tau, length) {
                Ok(v) => v,
                Err(Error::InvalidQuery(msg)) => return Err(Error::Config(msg)),
                Err(e) => return Err(e),
            };
            writeln!(out, "V_min = {v:.3} m/s")?;
        }
        _ => {
            return Err(Error::Config(
                "give exactly one of --V or --delta-t; the other is solved for".into(),
            ))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum BetaAxis {
    Values(Vec<f64>),
    SameAsAlpha,
    MinusAlpha,
}

fn parse_angle_grid(spec: &str) -> Result<Vec<(f64, f64)>> {
    let mut alpha = None;
    let mut beta = None;
    for part in spec.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad angle grid term {part:?}, expected KEY=RANGE")))?;
        match key.trim() {
            "alpha" => alpha = Some(parse_values(value)?),
            "beta" => {
                beta = Some(match value.trim() {
                    "alpha" => BetaAxis::SameAsAlpha,
                    "-alpha" => BetaAxis::MinusAlpha,
                    v => BetaAxis::Values(parse_values(v)?),
                })
            }
            other => return Err(Error::Config(format!("unknown angle grid key {other:?}"))),
        }
    }
    let alpha = alpha.ok_or_else(|| Error::Config("angle grid needs alpha=".into()))?;
    let beta = beta.ok_or_else(|| Error::Config("angle grid needs beta=".into()))?;
    let points = match beta {
        BetaAxis::SameAsAlpha => alpha.iter().map(|&a| (a, a)).collect(),
        BetaAxis::MinusAlpha => alpha.iter().map(|&a| (a, -a)).collect(),
        BetaAxis::Values(bs) => alpha.iter().flat_map(|&a| bs.iter().map(move |&b| (a, b))).collect(),
    };
    Ok(points)
}

fn scan<W: Write>(args: &ScanArgs, out: &mut W) -> Result<()> {
    let mut base = load_config(&args.config)?;
    let workers = apply_overrides(&mut base, &args.run)?;
    let points = parse_angle_grid(&args.angle_grid)?;
    let class = nominal_class(&base.simulation)?;

    let mut text = format!("{SCAN_HEADER}\n");
    for (k, &(alpha, beta)) in points.iter().enumerate() {
        let point = base.with_angles_deg(alpha, beta)?;
        for model in [Model::Qm, Model::Ad] {
            let mut sim = point.simulation;
            sim.model = model;
            // each grid point gets its own seed; both models share it
            sim.seed = base.simulation.seed.wrapping_add(k as u64);
            let closed = model_distribution(model, class, &sim.angles, sim.nonbefore_policy)?.correlation();
            let counts = run_trials(&sim, workers)?;
            let est = estimate_correlation(&counts)?;
            text.push_str(&format!(
                "{alpha},{beta},{model},{closed},{},{},{}\n",
                est.e_hat, est.se, est.n
            ));
        }
    }
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}
