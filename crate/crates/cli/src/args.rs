use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stereo-bp", version, about = "Dense stereo matching with hierarchical belief propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a disparity map from a rectified stereo pair.
    #[command(args_override_self = true)]
    Match(MatchArgs),
    /// Score a disparity map against ground truth.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Write a random-dot stereogram with its ground truth.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Full,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Count(usize),
}

impl Threads {
    pub fn resolve(self) -> usize {
        match self {
            Threads::Auto => std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            Threads::Count(n) => n,
        }
    }
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected `auto` or a positive count, got `{s}`")),
        Ok(n) => Ok(Threads::Count(n)),
    }
}

/// `all` or a positive count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopK {
    All,
    Top(usize),
}

fn parse_topk(s: &str) -> Result<TopK, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(TopK::All);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected `all` or a positive count, got `{s}`")),
        Ok(n) => Ok(TopK::Top(n)),
    }
}

/// Per-scale sweep budgets, coarsest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepBudgets(pub Vec<usize>);

fn parse_sweeps(s: &str) -> Result<SweepBudgets, String> {
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("sweep budgets must be positive integers, got `{t}`")),
            Ok(n) => Ok(n),
        })
        .collect::<Result<_, _>>()
        .map(SweepBudgets)
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Optional key = value file whose entries mirror the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Left (reference) view, PGM or PPM.
    #[arg(long)]
    pub left: PathBuf,
    /// Right view, PGM or PPM.
    #[arg(long)]
    pub right: PathBuf,
    /// Ground-truth disparity PGM; when given, the evaluation line is printed.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output disparity PGM.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of disparity levels searched.
    #[arg(long, default_value_t = 20)]
    pub max_disp: usize,
    #[arg(long, default_value_t = 4)]
    pub scales: usize,
    /// Comma-separated sweep budgets, coarsest first, or one budget for every
    /// scale. Defaults to 10 per scale and 20 at the finest.
    #[arg(long, value_parser = parse_sweeps)]
    pub sweeps: Option<SweepBudgets>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Fast)]
    pub schedule: ScheduleArg,
    /// NCC window radius.
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    /// Candidate disparities kept per pixel (`all` disables pruning).
    #[arg(long, default_value = "all", value_parser = parse_topk)]
    pub topk: TopK,
    #[arg(long, default_value_t = 1.0)]
    pub data_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub data_truncation: f64,
    /// Per-level jump cost.
    #[arg(long, default_value_t = 1.0)]
    pub slope: f64,
    /// Jump cost ceiling.
    #[arg(long, default_value_t = 2.0)]
    pub jump_truncation: f64,
    /// Gray value per disparity level in the output and truth files.
    #[arg(long, default_value_t = 8)]
    pub disp_scale: u32,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    /// Excluded left-border columns; defaults to `--max-disp`.
    #[arg(long)]
    pub border: Option<usize>,
    /// Treat gray 0 in the truth file as disparity 0 instead of unknown.
    #[arg(long)]
    pub truth_zero_valid: bool,
    /// Worker threads, or `auto`.
    #[arg(long, env = "STEREO_BP_THREADS", default_value = "auto", value_parser = parse_threads)]
    pub threads: Threads,
    /// Write the per-sweep trace next to the output as `<out>.trace.csv`.
    #[arg(long)]
    pub trace: bool,
    /// Write the finest cost volume as a raw little-endian dump.
    #[arg(long)]
    pub dump_volume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Disparity map to score.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub border: usize,
    #[arg(long, default_value_t = 8)]
    pub disp_scale: u32,
    #[arg(long)]
    pub truth_zero_valid: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Disparity of the central rectangle; must be below width / 4.
    #[arg(long, default_value_t = 5)]
    pub shift: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output path of the left view.
    #[arg(long)]
    pub left: PathBuf,
    /// Output path of the right view.
    #[arg(long)]
    pub right: PathBuf,
    /// Output path of the ground-truth disparity.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub disp_scale: u32,
}

const SUBCOMMANDS: [&str; 3] = ["match", "eval", "synth"];

/// Splices the entries of a `--config` file in front of the explicit flags,
/// so that explicit flags override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(sub_at) = args
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        return Ok(args);
    };
    let mut path = None;
    let mut i = sub_at + 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing config file {}", path.display()))?;
    let mut injected = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => injected.push(OsString::from(flag)),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => injected.extend([flag.into(), s.into()]),
            toml::Value::Integer(n) => injected.extend([flag.into(), n.to_string().into()]),
            toml::Value::Float(x) => injected.extend([flag.into(), x.to_string().into()]),
            toml::Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Integer(n) => Ok(n.to_string()),
                        other => bail!("config key `{key}`: unsupported list item {other}"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                injected.extend([flag.into(), parts.join(",").into()]);
            }
            other => bail!("config key `{key}`: unsupported value {other}"),
        }
    }
    let mut out = args[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}
