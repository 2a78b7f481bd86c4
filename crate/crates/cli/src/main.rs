//! Command-line pipeline: simulate -> solve -> eval, plus overlap
//! statistics, the runtime-scaling benchmark, the lambda/SNR sweep, and
//! manifest-driven re-runs.
//!
//! Exit codes: 0 success, 2 invalid input, 3 uncertified solve,
//! 4 timed-out solve.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use convlasso::active_set::{self, SolverSettings};
use convlasso::bench::{run_bench_with, BenchPlan};
use convlasso::io;
use convlasso::lasso::LassoConfig;
use convlasso::metrics::{cp_score, f1_score, CpConfig, MatchConfig};
use convlasso::operator;
use convlasso::overlap::{empirical_overlaps, overlap_bound, per_neuron_overlaps};
use convlasso::report::SolveMode;
use convlasso::seed::{derive, Stream};
use convlasso::simulate::{
    add_noise, poisson_activations, synth_shapes, NoiseSpec, PoissonSpec, ShapeParams,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{Duration, Instant};

mod manifest;

const EXIT_INVALID: u8 = 2;
const EXIT_UNCERTIFIED: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;

/// Matrix-free windowed active-set Lasso for convolutional spike recovery.
#[derive(Debug, Parser)]
#[command(name = "convlasso", version, about)]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print a machine-readable JSON result to stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset: shape bank, observed signal, truth CSV.
    Simulate(SimulateArgs),
    /// Recover activations from a signal given its shape bank.
    Solve(SolveArgs),
    /// Score an estimated activation CSV against ground truth.
    Eval(EvalArgs),
    /// Overlap-group statistics of an activation CSV, with the theoretical
    /// mean-size bound.
    OverlapStats(OverlapArgs),
    /// Runtime-scaling benchmark with log-log slope fits.
    Bench(BenchArgs),
    /// F1/CP scores over a lambda x SNR grid.
    Sweep(SweepArgs),
    /// Re-execute a previous invocation from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SimulateArgs {
    /// Neuron count.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Electrode count.
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Shape length in samples.
    #[arg(long, default_value_t = 30)]
    t: usize,
    /// Signal length in samples.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Per-neuron firing rate in Hz.
    #[arg(long, default_value_t = 10.0)]
    rate_hz: f64,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 30_000.0)]
    sample_rate_hz: f64,
    /// Target SNR in dB; omit for a noiseless signal.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fix all amplitudes at 1 instead of drawing from [0.8, 1.2].
    #[arg(long)]
    no_jitter: bool,
    /// Output prefix; writes <prefix>.shapes.bin, <prefix>.signal.bin,
    /// <prefix>.truth.csv and <prefix>.manifest.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SolveArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    shapes: PathBuf,
    /// fista-full | as-naive | as-group | as-window
    #[arg(long, default_value = "as-window")]
    solver: SolveMode,
    /// Regularization: an absolute value like "0.35", or "rel:x" for
    /// x * lambda_max(signal).
    #[arg(long)]
    lambda: LambdaSpec,
    /// Scan window width in samples (windowed solver); default 10 * t.
    #[arg(long)]
    window: Option<usize>,
    /// Optimality slack; default 1e-6 * lambda.
    #[arg(long)]
    kkt_tol: Option<f64>,
    /// Cap on active-set insertions (or proximal iterations).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Abort the solve after this many seconds.
    #[arg(long)]
    time_limit_secs: Option<f64>,
    /// Exit 0 even when the returned solution is not certified.
    #[arg(long)]
    allow_uncertified: bool,
    /// Estimated-activations CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Solve report JSON path; default <out>.report.json.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    est: PathBuf,
    /// Max |time deviation| for an F1 match, in samples.
    #[arg(long, default_value_t = 0)]
    tol: usize,
    /// CP kernel support in samples (odd).
    #[arg(long, default_value_t = 5)]
    cp_width: usize,
    /// Replace amplitudes by 1 in the CP score.
    #[arg(long)]
    binarize: bool,
    /// Allow matches across neurons.
    #[arg(long)]
    any_neuron: bool,
    /// Also write the scores JSON here (plus a manifest alongside).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct OverlapArgs {
    /// Activation CSV.
    #[arg(long)]
    acts: PathBuf,
    /// Shape length in samples (the chain gap threshold).
    #[arg(long)]
    t: usize,
    /// Signal length; default max sample + 1.
    #[arg(long)]
    n: Option<usize>,
    /// Pooled intensity for the theoretical bound; default count / n.
    #[arg(long)]
    mu: Option<f64>,
    /// Also write the stats JSON here (plus a manifest alongside).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct BenchArgs {
    /// Plan JSON; defaults to the built-in complexity-experiment plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Override the plan's repetition count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the plan's per-run time limit in seconds.
    #[arg(long)]
    time_limit_secs: Option<f64>,
    /// Rows CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON output (slopes per solver); default <out>.summary.json.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SweepArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 30)]
    t: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Per-neuron firing rate in Hz.
    #[arg(long, default_value_t = 50.0)]
    rate_hz: f64,
    #[arg(long, default_value_t = 5_000.0)]
    sample_rate_hz: f64,
    /// Relative lambda grid (fractions of lambda_max), comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.001,0.00316,0.01,0.0316,0.1,0.316,1.0"
    )]
    lambda_rel: Vec<f64>,
    /// SNR grid in dB; use "none" for a noiseless column.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-20,-10,0,10,20,none"
    )]
    snr_db: Vec<SnrSpec>,
    /// Simulations per grid cell.
    #[arg(long, default_value_t = 5)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "as-window")]
    solver: SolveMode,
    /// F1 matching tolerance in samples.
    #[arg(long, default_value_t = 1)]
    tol: usize,
    /// CP kernel support; default t/2 rounded to odd.
    #[arg(long)]
    cp_width: Option<usize>,
    /// Cap on active-set insertions per solve; uncapped by default. Low
    /// lambda at low SNR makes solutions dense, where a cap keeps the sweep
    /// fast (capped solves are recorded as uncertified).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Fix all amplitudes at 1 instead of drawing from [0.8, 1.2].
    #[arg(long)]
    no_jitter: bool,
    #[arg(long)]
    allow_uncertified: bool,
    /// Output prefix; writes <prefix>.cells.csv, <prefix>.draws.csv and
    /// <prefix>.manifest.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct RerunArgs {
    /// Manifest of the invocation to reproduce.
    #[arg(long)]
    manifest: PathBuf,
    /// New output location (prefix or file path, matching the original
    /// command's output argument).
    #[arg(long)]
    out: PathBuf,
}

/// Absolute lambda or a fraction of lambda_max.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
enum LambdaSpec {
    Abs(f64),
    Rel(f64),
}

impl FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| -> Result<f64, String> {
            let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(format!("lambda must be positive and finite, got {x}"));
            }
            Ok(x)
        };
        match s.strip_prefix("rel:") {
            Some(rest) => Ok(LambdaSpec::Rel(parse(rest)?)),
            None => Ok(LambdaSpec::Abs(parse(s)?)),
        }
    }
}

impl LambdaSpec {
    fn resolve(self, shapes: &convlasso::ShapeBank, y: &convlasso::MultiSignal) -> Result<f64> {
        match self {
            LambdaSpec::Abs(v) => Ok(v),
            LambdaSpec::Rel(x) => {
                let lmax = operator::lambda_max(shapes, y)?;
                if lmax == 0.0 {
                    bail!("signal is identically zero; relative lambda is undefined");
                }
                Ok(x * lmax)
            }
        }
    }
}

/// SNR cell: a dB value or the noiseless marker.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct SnrSpec(Option<f64>);

impl FromStr for SnrSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("inf") {
            return Ok(SnrSpec(None));
        }
        s.parse::<f64>()
            .map(|v| SnrSpec(Some(v)))
            .map_err(|_| format!("'{s}' is neither a dB value nor 'none'"))
    }
}

impl std::fmt::Display for SnrSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => write!(f, "none"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Io {
        quiet: cli.quiet,
        json: cli.json,
    };
    match dispatch(cli.command, &ctx) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

#[derive(Clone, Copy)]
struct Io {
    quiet: bool,
    json: bool,
}

impl Io {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn emit_json(&self, value: &serde_json::Value) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("json"));
        }
    }
}

fn dispatch(command: Command, ctx: &Io) -> Result<ExitCode> {
    match command {
        Command::Simulate(args) => cmd_simulate(args, ctx),
        Command::Solve(args) => cmd_solve(args, ctx),
        Command::Eval(args) => cmd_eval(args, ctx),
        Command::OverlapStats(args) => cmd_overlap(args, ctx),
        Command::Bench(args) => cmd_bench(args, ctx),
        Command::Sweep(args) => cmd_sweep(args, ctx),
        Command::Rerun(args) => cmd_rerun(args, ctx),
    }
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(suffix);
    prefix.with_file_name(name)
}

fn cmd_simulate(args: SimulateArgs, ctx: &Io) -> Result<ExitCode> {
    let start = Instant::now();
    if args.sample_rate_hz <= 0.0 {
        bail!("sample rate must be positive");
    }
    let mu = args.rate_hz / args.sample_rate_hz;
    if !(0.0..1.0).contains(&mu) {
        bail!(
            "rate {} Hz at {} Hz sampling gives firing probability {mu} per sample; need [0, 1)",
            args.rate_hz,
            args.sample_rate_hz
        );
    }
    let shapes = synth_shapes(&ShapeParams::randomized(args.k, args.d, args.t, args.seed))?;
    let truth = poisson_activations(&PoissonSpec {
        mu: vec![mu; args.k],
        n: args.n,
        t: args.t,
        seed: args.seed,
        jitter: !args.no_jitter,
    })?;
    let clean = operator::forward(&shapes, &truth, args.n)?;
    let observed = if truth.is_empty() || args.snr_db.is_none() {
        clean.clone()
    } else {
        add_noise(
            &clean,
            clean.energy(),
            &NoiseSpec {
                snr_db: args.snr_db,
                seed: args.seed,
            },
        )?
    };

    let shapes_path = prefixed(&args.out_prefix, ".shapes.bin");
    let signal_path = prefixed(&args.out_prefix, ".signal.bin");
    let truth_path = prefixed(&args.out_prefix, ".truth.csv");
    io::write_shape_bank(&shapes_path, &shapes, args.sample_rate_hz)?;
    io::write_signal(&signal_path, &observed, args.sample_rate_hz)?;
    io::write_activations(&truth_path, &truth)?;

    ctx.note(format!(
        "simulated k={} d={} t={} n={} events={} snr={:?}",
        args.k,
        args.d,
        args.t,
        args.n,
        truth.len(),
        args.snr_db
    ));
    manifest::write(
        &prefixed(&args.out_prefix, ".manifest.json"),
        "simulate",
        serde_json::to_value(&args)?,
        &[],
        &[&shapes_path, &signal_path, &truth_path],
        start.elapsed().as_secs_f64(),
    )?;
    ctx.emit_json(&serde_json::json!({
        "events": truth.len(),
        "outputs": [shapes_path, signal_path, truth_path],
    }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs, ctx: &Io) -> Result<ExitCode> {
    let start = Instant::now();
    let (shapes, _rate) = io::read_shape_bank(&args.shapes)
        .with_context(|| format!("reading shape bank {}", args.shapes.display()))?;
    let (signal, _rate) = io::read_signal(&args.signal)
        .with_context(|| format!("reading signal {}", args.signal.display()))?;
    if signal.d() != shapes.d() {
        bail!(
            "signal has {} electrodes but shape bank has {}",
            signal.d(),
            shapes.d()
        );
    }
    let lambda = args.lambda.resolve(&shapes, &signal)?;
    let mut settings = SolverSettings::new(args.solver, LassoConfig::new(lambda));
    if let Some(tol) = args.kkt_tol {
        settings.kkt_tol = tol;
    }
    settings.window = args.window;
    if let Some(cap) = args.max_iter {
        settings.max_iterations = Some(cap);
        settings.lasso.max_iter = cap;
    }
    settings.time_limit = args.time_limit_secs.map(Duration::from_secs_f64);

    let (solution, report) = active_set::solve(&shapes, &signal, &settings)?;
    io::write_activations(&args.out, &solution)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| prefixed(&args.out, ".report.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;

    ctx.note(format!(
        "{}: {} activations, objective {:.6e}, kkt residual {:.3e}, certified={}, {} iterations in {:.3}s",
        report.mode,
        solution.len(),
        report.objective,
        report.kkt_violation,
        report.certified,
        report.iterations,
        report.solve_seconds,
    ));
    manifest::write(
        &prefixed(&args.out, ".manifest.json"),
        "solve",
        serde_json::to_value(&args)?,
        &[&args.signal, &args.shapes],
        &[&args.out, &report_path],
        start.elapsed().as_secs_f64(),
    )?;
    ctx.emit_json(&serde_json::json!({
        "activations": solution.len(),
        "lambda": lambda,
        "certified": report.certified,
        "timed_out": report.timed_out,
        "objective": report.objective,
    }));

    if report.timed_out {
        return Ok(ExitCode::from(EXIT_TIMEOUT));
    }
    if !report.certified && !args.allow_uncertified {
        return Ok(ExitCode::from(EXIT_UNCERTIFIED));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs, _ctx: &Io) -> Result<ExitCode> {
    let start = Instant::now();
    let truth_rows = io::read_activation_rows(&args.truth)?;
    let est_rows = io::read_activation_rows(&args.est)?;
    // Harmonize the two files onto one grid.
    let (kt, nt) = io::infer_grid(&truth_rows);
    let (ke, ne) = io::infer_grid(&est_rows);
    let (k, n) = (kt.max(ke), nt.max(ne));
    let truth = convlasso::ActivationSet::new(k, n, truth_rows)?;
    let est = convlasso::ActivationSet::new(k, n, est_rows)?;

    let f1 = f1_score(
        &truth,
        &est,
        &MatchConfig {
            tol: args.tol,
            require_same_neuron: !args.any_neuron,
        },
    )?;
    let mut cp_cfg = CpConfig::new(args.cp_width)?;
    cp_cfg.binarize = args.binarize;
    let cp = cp_score(&truth, &est, &cp_cfg)?;

    let scores = serde_json::json!({
        "precision": f1.precision,
        "recall": f1.recall,
        "f1": f1.f1,
        "cp": cp.value,
        "cp_both_empty": cp.both_empty,
        "truth_count": truth.len(),
        "est_count": est.len(),
    });
    println!("{}", serde_json::to_string_pretty(&scores)?);
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&scores)? + "\n")?;
        manifest::write(
            &prefixed(out, ".manifest.json"),
            "eval",
            serde_json::to_value(&args)?,
            &[&args.truth, &args.est],
            &[out],
            start.elapsed().as_secs_f64(),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_overlap(args: OverlapArgs, _ctx: &Io) -> Result<ExitCode> {
    let start = Instant::now();
    if args.t == 0 {
        bail!("t must be at least 1");
    }
    let rows = io::read_activation_rows(&args.acts)?;
    let (k_inf, n_inf) = io::infer_grid(&rows);
    let n = args.n.unwrap_or(n_inf);
    if n < n_inf {
        bail!(
            "--n {} is smaller than the largest sample index {}",
            n,
            n_inf - 1
        );
    }
    let acts = convlasso::ActivationSet::new(k_inf, n, rows)?;
    let pooled = empirical_overlaps(&acts, args.t);
    let per_neuron = per_neuron_overlaps(&acts, args.t);
    let mu = match args.mu {
        Some(m) => m,
        None => acts.len() as f64 / n as f64,
    };
    let stats = serde_json::json!({
        "t": args.t,
        "n": n,
        "activations": acts.len(),
        "mu_pooled": mu,
        "theoretical_mean_bound": if mu > 0.0 { Some(overlap_bound(mu, args.t)) } else { None },
        "pooled": pooled,
        "per_neuron": per_neuron,
    });
    println!("{}", serde_json::to_string_pretty(&stats)?);
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&stats)? + "\n")?;
        manifest::write(
            &prefixed(out, ".manifest.json"),
            "overlap-stats",
            serde_json::to_value(&args)?,
            &[&args.acts],
            &[out],
            start.elapsed().as_secs_f64(),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs, ctx: &Io) -> Result<ExitCode> {
    let start = Instant::now();
    let mut plan: BenchPlan = match &args.plan {
        Some(path) => serde_json::from_reader(std::fs::File::open(path)?)
            .with_context(|| format!("parsing plan {}", path.display()))?,
        None => BenchPlan::default(),
    };
    if let Some(reps) = args.reps {
        plan.reps = reps;
    }
    if let Some(limit) = args.time_limit_secs {
        plan.time_limit_secs = limit;
    }

    let result = run_bench_with(&plan, |row| {
        ctx.note(format!(
            "bench {} n={} rep={} -> {:.3}s certified={} timed_out={}",
            row.solver, row.n, row.rep, row.seconds, row.certified, row.timed_out
        ));
    })?;
    std::fs::write(&args.out, result.rows_csv())?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| prefixed(&args.out, ".summary.json"));
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&result.summaries)? + "\n",
    )?;
    for s in &result.summaries {
        match &s.slope {
            Some(fit) => ctx.note(format!(
                "{}: slope {:.3} (r2 {:.4}) over {} sizes",
                s.solver,
                fit.slope,
                fit.r2,
                s.points
                    .iter()
                    .filter(|p| p.certified_runs == p.runs)
                    .count()
            )),
            None => ctx.note(format!(
                "{}: slope not fitted (< 3 certified sizes)",
                s.solver
            )),
        }
    }
    manifest::write(
        &prefixed(&args.out, ".manifest.json"),
        "bench",
        serde_json::json!({ "args": &args, "plan": &plan }),
        args.plan
            .iter()
            .map(|p| p.as_path())
            .collect::<Vec<_>>()
            .as_slice(),
        &[&args.out, &summary_path],
        start.elapsed().as_secs_f64(),
    )?;
    ctx.emit_json(&serde_json::to_value(&result.summaries)?);

    // Timeouts are the documented mechanism for infeasible sizes; any other
    // failed certification is a solver failure.
    let hard_failure = result.rows.iter().any(|r| !r.certified && !r.timed_out);
    if hard_failure {
        return Ok(ExitCode::from(EXIT_UNCERTIFIED));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct SweepDrawRow {
    lambda_rel: f64,
    snr_db: String,
    draw: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    cp: f64,
    certified: bool,
    truth_count: usize,
    est_count: usize,
}

fn cmd_sweep(args: SweepArgs, ctx: &Io) -> Result<ExitCode> {
    let start = Instant::now();
    if args.lambda_rel.is_empty() || args.snr_db.is_empty() || args.draws == 0 {
        bail!("sweep grid must have at least one lambda, one SNR and one draw");
    }
    if args.sample_rate_hz <= 0.0 {
        bail!("sample rate must be positive");
    }
    let mu = args.rate_hz / args.sample_rate_hz;
    if !(0.0..1.0).contains(&mu) {
        bail!("firing probability per sample must be in [0, 1), got {mu}");
    }
    // Shapes are shared by the whole sweep; draws vary trains and noise.
    let shapes = synth_shapes(&ShapeParams::randomized(args.k, args.d, args.t, args.seed))?;
    let cp_cfg = match args.cp_width {
        Some(w) => CpConfig::new(w)?,
        None => CpConfig::for_shape_length(args.t),
    };
    let match_cfg = MatchConfig {
        tol: args.tol,
        require_same_neuron: true,
    };

    // Per-draw datasets are reused across the whole grid: the same trains
    // and the same unit noise, scaled per SNR cell.
    struct Draw {
        truth: convlasso::ActivationSet,
        clean: convlasso::MultiSignal,
        seed: u64,
    }
    let draws: Vec<Draw> = (0..args.draws)
        .map(|i| -> Result<Draw> {
            let seed = derive(args.seed, Stream::Sweep, i as u64);
            let truth = poisson_activations(&PoissonSpec {
                mu: vec![mu; args.k],
                n: args.n,
                t: args.t,
                seed,
                jitter: !args.no_jitter,
            })?;
            let clean = operator::forward(&shapes, &truth, args.n)?;
            Ok(Draw { truth, clean, seed })
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<SweepDrawRow> = Vec::new();
    let mut uncertified = 0usize;
    for &snr in &args.snr_db {
        for draw in &draws {
            let observed = if draw.truth.is_empty() || snr.0.is_none() {
                draw.clean.clone()
            } else {
                add_noise(
                    &draw.clean,
                    draw.clean.energy(),
                    &NoiseSpec {
                        snr_db: snr.0,
                        seed: draw.seed,
                    },
                )?
            };
            let lmax = operator::lambda_max(&shapes, &observed)?;
            for &rel in &args.lambda_rel {
                let (est, certified) = if lmax == 0.0 {
                    (convlasso::ActivationSet::empty(args.k, args.n), true)
                } else {
                    let mut settings =
                        SolverSettings::new(args.solver, LassoConfig::new(rel * lmax));
                    settings.max_iterations = args.max_iter;
                    let (sol, report) = active_set::solve(&shapes, &observed, &settings)?;
                    (sol, report.certified)
                };
                if !certified {
                    uncertified += 1;
                }
                let f1 = f1_score(&draw.truth, &est, &match_cfg)?;
                let cp = cp_score(&draw.truth, &est, &cp_cfg)?;
                rows.push(SweepDrawRow {
                    lambda_rel: rel,
                    snr_db: snr.to_string(),
                    draw: rows.len() % args.draws, // overwritten below
                    precision: f1.precision,
                    recall: f1.recall,
                    f1: f1.f1,
                    cp: cp.value,
                    certified,
                    truth_count: draw.truth.len(),
                    est_count: est.len(),
                });
            }
        }
        ctx.note(format!("sweep: finished snr={snr}"));
    }
    // Renumber draw indices correctly (rows were pushed lambda-major).
    {
        let lambdas = args.lambda_rel.len();
        for (i, row) in rows.iter_mut().enumerate() {
            row.draw = (i / lambdas) % args.draws;
        }
    }

    let draws_path = prefixed(&args.out_prefix, ".draws.csv");
    let mut draws_csv = String::from(
        "lambda_rel,snr_db,draw,precision,recall,f1,cp,certified,truth_count,est_count\n",
    );
    for r in &rows {
        draws_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.lambda_rel,
            r.snr_db,
            r.draw,
            r.precision,
            r.recall,
            r.f1,
            r.cp,
            r.certified,
            r.truth_count,
            r.est_count
        ));
    }
    std::fs::write(&draws_path, draws_csv)?;

    let cells_path = prefixed(&args.out_prefix, ".cells.csv");
    let mut cells_csv = String::from(
        "lambda_rel,snr_db,mean_precision,mean_recall,mean_f1,mean_cp,uncertified_draws\n",
    );
    for &snr in &args.snr_db {
        for &rel in &args.lambda_rel {
            let cell: Vec<&SweepDrawRow> = rows
                .iter()
                .filter(|r| r.lambda_rel == rel && r.snr_db == snr.to_string())
                .collect();
            let m = cell.len().max(1) as f64;
            let mean = |f: fn(&SweepDrawRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / m;
            cells_csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rel,
                snr,
                mean(|r| r.precision),
                mean(|r| r.recall),
                mean(|r| r.f1),
                mean(|r| r.cp),
                cell.iter().filter(|r| !r.certified).count()
            ));
        }
    }
    std::fs::write(&cells_path, cells_csv)?;

    manifest::write(
        &prefixed(&args.out_prefix, ".manifest.json"),
        "sweep",
        serde_json::to_value(&args)?,
        &[],
        &[&cells_path, &draws_path],
        start.elapsed().as_secs_f64(),
    )?;
    ctx.emit_json(&serde_json::json!({
        "cells": args.lambda_rel.len() * args.snr_db.len(),
        "draws": args.draws,
        "uncertified": uncertified,
    }));

    if uncertified > 0 && !args.allow_uncertified {
        return Ok(ExitCode::from(EXIT_UNCERTIFIED));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_rerun(args: RerunArgs, ctx: &Io) -> Result<ExitCode> {
    let manifest = io::read_manifest(&args.manifest)
        .with_context(|| format!("reading manifest {}", args.manifest.display()))?;
    // Inputs must still be the bytes the original run consumed.
    for input in &manifest.inputs {
        let now = io::checksum_file(Path::new(&input.path))
            .with_context(|| format!("hashing input {}", input.path))?;
        if now != input.checksum {
            bail!(
                "input {} changed since the original run (checksum {} != {})",
                input.path,
                now,
                input.checksum
            );
        }
    }
    ctx.note(format!("re-running '{}' from manifest", manifest.command));
    match manifest.command.as_str() {
        "simulate" => {
            let mut p: SimulateArgs = serde_json::from_value(manifest.params)?;
            p.out_prefix = args.out.clone();
            cmd_simulate(p, ctx)
        }
        "solve" => {
            let mut p: SolveArgs = serde_json::from_value(manifest.params)?;
            p.out = args.out.clone();
            p.report = None;
            cmd_solve(p, ctx)
        }
        "eval" => {
            let mut p: EvalArgs = serde_json::from_value(manifest.params)?;
            p.out = Some(args.out.clone());
            cmd_eval(p, ctx)
        }
        "overlap-stats" => {
            let mut p: OverlapArgs = serde_json::from_value(manifest.params)?;
            p.out = Some(args.out.clone());
            cmd_overlap(p, ctx)
        }
        "bench" => {
            let mut p: BenchArgs = serde_json::from_value(manifest.params["args"].clone())?;
            p.out = args.out.clone();
            p.summary = None;
            cmd_bench(p, ctx)
        }
        "sweep" => {
            let mut p: SweepArgs = serde_json::from_value(manifest.params)?;
            p.out_prefix = args.out.clone();
            cmd_sweep(p, ctx)
        }
        other => bail!("manifest records unknown command '{other}'"),
    }
}
