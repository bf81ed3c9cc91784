//! Command-line front end.
//!
//! Exit codes: 0 success, 1 unreadable or invalid input, 2 invalid
//! parameters, 3 brute-force cap exceeded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagram::{DiagramError, Nfbdd, NodeId, DEFAULT_EXACT_CAP};
use crate::fpras::{
    approx_count_normalized, core_run_with, CountConfig, CountMethod, CountReport, FprasError, NodeEvent, Observer,
    RunOptions,
};
use crate::harness::{calibrate, guarantee_threshold, standard_corpus, CalibrationReport, Instance};
use crate::io::{dnf_to_nfbdd, gen_random, parse_dnf, parse_nfbdd, serialize_nfbdd, GenError, ParseError};
use crate::transform::{normalize, NormalForm};

/// Largest `n` answered by enumeration under `--exact-when-small`.
pub const EXACT_WHEN_SMALL_LIMIT: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "nfbdd", version, about = "Approximate model counting for nFBDDs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the number of models.
    Count(CountArgs),
    /// Count models by enumeration.
    Exact(ExactArgs),
    /// Write the layered normal form.
    Normalize(NormalizeArgs),
    /// Check that a file parses into a valid diagram.
    Validate(InputArgs),
    /// Generate a random diagram.
    Gen(GenArgs),
    /// Compare repeated estimates with exact counts.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    pub input: PathBuf,
    /// Read a DNF in DIMACS-style notation instead of an nFBDD.
    #[arg(long)]
    pub dnf: bool,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Answer by enumeration when n ≤ 16.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub exact_when_small: bool,
    /// Disable the sample-set size interrupt.
    #[arg(long)]
    pub no_theta: bool,
    /// Report wall-clock times; without it every time field is 0.
    #[arg(long)]
    pub timing: bool,
    /// Print per-node diagnostics of the first run to stderr.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub vars: usize,
    #[arg(long)]
    pub edges: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Instance files; ignored with --corpus.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub dnf: bool,
    /// Use the built-in corpus generated from --seed.
    #[arg(long)]
    pub corpus: bool,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_theta: bool,
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    pub cap: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

/// Failure classes mapped to exit codes.
#[derive(Debug, thiserror::Error)]
enum Exit {
    #[error("invalid parameters: {0}")]
    Params(String),
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Exit>() || cause.is::<FprasError>() || cause.is::<GenError>() {
            return 2;
        }
        if let Some(DiagramError::CapExceeded { .. }) = cause.downcast_ref::<DiagramError>() {
            return 3;
        }
    }
    1
}

/// Configures the worker pool from `NFBDD_THREADS` (0 or unset: automatic).
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("NFBDD_THREADS") else { return Ok(()) };
    let threads: usize = value.trim().parse().with_context(|| format!("NFBDD_THREADS={value}"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

/// Runs a parsed command, writing its result to `out`.
pub fn run(cli: Cli, out: &mut impl std::io::Write) -> Result<()> {
    match cli.command {
        Command::Count(args) => cmd_count(&args, out),
        Command::Exact(args) => cmd_exact(&args, out),
        Command::Normalize(args) => cmd_normalize(&args, out),
        Command::Validate(args) => cmd_validate(&args, out),
        Command::Gen(args) => cmd_gen(&args, out),
        Command::Calibrate(args) => cmd_calibrate(&args, out),
    }
}

pub fn load(path: &Path, dnf: bool) -> Result<Nfbdd> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: Result<Nfbdd, ParseError> = if dnf {
        parse_dnf(&text).map(|f| dnf_to_nfbdd(&f))
    } else {
        parse_nfbdd(&text)
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

fn check_params(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Exit::Params(format!("epsilon must be positive, got {epsilon}")).into());
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Exit::Params(format!("delta must lie in (0, 1), got {delta}")).into());
    }
    Ok(())
}

/// `x` with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        format!("{:.*}", (5 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

pub fn count_report(b: &Nfbdd, args: &CountArgs) -> Result<CountReport> {
    check_params(args.epsilon, args.delta)?;
    let started = Instant::now();
    let config = CountConfig {
        epsilon: args.epsilon,
        delta: args.delta,
        seed: args.seed,
        interrupt: !args.no_theta,
    };
    let normal = normalize(b);
    let small = args.exact_when_small && b.n_vars() <= EXACT_WHEN_SMALL_LIMIT;
    let report = if small && !normal.is_constant_false() && b.n_vars() > 0 {
        let exact = b.count_exact()?;
        let mut report = approx_count_normalized(b, &NormalForm::ConstantFalse, config, started)?;
        report.normalized_size = normal.diagram().map(Nfbdd::size);
        report.estimate = exact as f64;
        report.exact = Some(exact);
        report.method = CountMethod::Exact;
        report
    } else {
        approx_count_normalized(b, &normal, config, started)?
    };
    if args.trace {
        if let (NormalForm::Normalized { diagram, layers }, Some(params)) = (&normal, &report.params) {
            let mut tracer = Tracer;
            core_run_with(diagram, layers, params, 0, RunOptions::default(), &mut tracer);
        }
    }
    Ok(if args.timing { report } else { report.without_timing() })
}

/// Writes one line per processed node to stderr.
#[derive(Default)]
struct Tracer;

impl Observer for Tracer {
    fn node_processed(&mut self, event: &NodeEvent<'_>) {
        let sizes = event.sets.total_len();
        let copies = event.sets.copies().max(1);
        let mut line = format!(
            "trace layer={} node={} p={:e} mean_set={:.3} max_set={}",
            event.layer,
            event.node,
            event.p.value(),
            sizes as f64 / copies as f64,
            event.sets.max_len()
        );
        if let Some(step) = event.or_step {
            let _ = write!(line, " rho={:e} rho_hat={:e}", step.rho.value(), step.rho_hat.value());
        }
        eprintln!("{line}");
    }

    fn interrupted(&mut self, node: NodeId, size: usize) {
        eprintln!("trace interrupted node={node} set_size={size}");
    }
}

pub fn render_count(report: &CountReport, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
        Format::Text => {
            let mut s = String::new();
            writeln!(s, "estimate     {}", sig6(report.estimate))?;
            if let Some(exact) = report.exact {
                writeln!(s, "exact        {exact}")?;
            }
            writeln!(s, "method       {}", serde_json::to_value(report.method)?.as_str().unwrap_or("?"))?;
            writeln!(s, "epsilon      {}", report.epsilon)?;
            writeln!(s, "delta        {}", report.delta)?;
            writeln!(s, "seed         {}", report.seed)?;
            writeln!(s, "vars         {}", report.n_vars)?;
            writeln!(s, "size         {}", report.input_size)?;
            if let Some(size) = report.normalized_size {
                writeln!(s, "normalized   {size}")?;
            }
            if let Some(p) = &report.params {
                writeln!(s, "params       n_s={} n_t={} m={} theta={}", p.n_s, p.n_t, p.m, match p.theta {
                    Some(t) => t.to_string(),
                    None => "none".to_string(),
                })?;
            }
            if !report.runs.is_empty() {
                writeln!(s, "runs         {} ({} interrupted)", report.runs.len(), report.interrupted_runs)?;
                for (i, run) in report.runs.iter().enumerate() {
                    let flag = if run.interrupted { " interrupted" } else { "" };
                    writeln!(s, "  run {i:<4} {}{flag} {}ms", sig6(run.estimate), run.millis)?;
                }
            }
            writeln!(s, "wall_ms      {}", report.wall_millis)?;
            s
        }
    })
}

fn cmd_count(args: &CountArgs, out: &mut impl std::io::Write) -> Result<()> {
    check_params(args.epsilon, args.delta)?;
    let b = load(&args.input.input, args.input.dnf)?;
    let report = count_report(&b, args)?;
    out.write_all(render_count(&report, args.format)?.as_bytes())?;
    Ok(())
}

fn cmd_exact(args: &ExactArgs, out: &mut impl std::io::Write) -> Result<()> {
    let b = load(&args.input.input, args.input.dnf)?;
    writeln!(out, "{}", b.count_exact_with_cap(args.cap)?)?;
    Ok(())
}

fn cmd_normalize(args: &NormalizeArgs, out: &mut impl std::io::Write) -> Result<()> {
    let b = load(&args.input.input, args.input.dnf)?;
    let text = match normalize(&b) {
        NormalForm::ConstantFalse => "CONSTANT_FALSE\n".to_string(),
        NormalForm::Normalized { diagram, .. } => serialize_nfbdd(&diagram),
    };
    write_output(args.output.as_deref(), &text, out)
}

fn cmd_validate(args: &InputArgs, out: &mut impl std::io::Write) -> Result<()> {
    let b = load(&args.input, args.dnf)?;
    writeln!(out, "valid: {} variables, {} nodes, {} edges", b.n_vars(), b.num_nodes(), b.size())?;
    Ok(())
}

fn cmd_gen(args: &GenArgs, out: &mut impl std::io::Write) -> Result<()> {
    let b = gen_random(args.vars, args.edges, args.seed)?;
    write_output(args.output.as_deref(), &serialize_nfbdd(&b), out)
}

fn write_output(path: Option<&Path>, text: &str, out: &mut impl std::io::Write) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

pub fn calibration_report(args: &CalibrateArgs) -> Result<CalibrationReport> {
    check_params(args.epsilon, args.delta)?;
    if args.trials == 0 {
        return Err(Exit::Params("trials must be positive".into()).into());
    }
    let corpus: Vec<Instance> = if args.corpus {
        standard_corpus(args.seed)
    } else {
        if args.inputs.is_empty() {
            return Err(Exit::Params("give instance files or --corpus".into()).into());
        }
        args.inputs
            .iter()
            .map(|p| Ok(Instance::new(p.display().to_string(), load(p, args.dnf)?)))
            .collect::<Result<_>>()?
    };
    Ok(calibrate(&corpus, args.epsilon, args.delta, args.trials, args.seed, !args.no_theta, args.cap)?)
}

fn cmd_calibrate(args: &CalibrateArgs, out: &mut impl std::io::Write) -> Result<()> {
    let report = calibration_report(args)?;
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Text => {
            let mut s = String::new();
            writeln!(
                s,
                "{:<28} {:>3} {:>5} {:>10} {:>8} {:>8} {:>9}",
                "instance", "n", "size", "exact", "success", "rel_err", "interrupt"
            )?;
            for i in &report.instances {
                writeln!(
                    s,
                    "{:<28} {:>3} {:>5} {:>10} {:>8.3} {:>8.4} {:>9.4}",
                    i.name, i.n_vars, i.size, i.exact, i.success_rate, i.mean_relative_error, i.interrupt_rate
                )?;
            }
            writeln!(
                s,
                "threshold {:.3} (1 - delta - slack); {}",
                guarantee_threshold(args.delta),
                if report.passed { "all instances pass" } else { "some instances fail" }
            )?;
            s
        }
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}
