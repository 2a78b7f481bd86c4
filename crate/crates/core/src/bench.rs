//! Runtime-scaling benchmark harness: times each solver over a ladder of
//! signal lengths and fits a log-log slope per solver.
//!
//! Simulation and regularization setup run before the timer starts, so a
//! row's `seconds` covers the solve alone. Runs that exceed the per-run time
//! limit are recorded as timeouts and excluded from the slope fit; once a
//! size times out, larger sizes for the same solver are recorded as timeouts
//! without being run (their cost only grows).

use crate::active_set::{self, SolverSettings};
use crate::error::{Error, Result};
use crate::lasso::LassoConfig;
use crate::operator;
use crate::report::SolveMode;
use crate::seed::{derive, Stream};
use crate::simulate::{simulate, SimSpec};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// What to run: solvers, signal lengths, repetitions, and the shared
/// simulation recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchPlan {
    pub solvers: Vec<SolveMode>,
    pub n_values: Vec<usize>,
    pub reps: usize,
    pub k: usize,
    pub d: usize,
    pub t: usize,
    /// Per-neuron firing probability per sample.
    pub mu: f64,
    /// Noise level; the complexity experiment runs noiseless.
    pub snr_db: Option<f64>,
    /// Regularization as a fraction of lambda_max of each simulated signal.
    pub lambda_rel: f64,
    /// Scan window for the windowed solver; defaults to 10 * t.
    pub window: Option<usize>,
    pub seed: u64,
    pub time_limit_secs: f64,
}

impl Default for BenchPlan {
    /// Mirrors the complexity experiment: 5 neurons, 4 electrodes, 10 Hz
    /// firing at 30 kHz sampling (mu = 1/3000 per sample), noiseless, sizes
    /// from 1e4 to 1e6.
    fn default() -> Self {
        BenchPlan {
            solvers: vec![SolveMode::AsGroup, SolveMode::AsWindow],
            n_values: vec![10_000, 30_000, 100_000, 300_000, 1_000_000],
            reps: 5,
            k: 5,
            d: 4,
            t: 30,
            mu: 1.0 / 3000.0,
            snr_db: None,
            lambda_rel: 0.1,
            window: None,
            seed: 2024,
            time_limit_secs: 120.0,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() || self.n_values.is_empty() {
            return Err(Error::arg("plan needs at least one solver and one n"));
        }
        if !self.n_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::arg("n values must be strictly increasing"));
        }
        if self.reps == 0 {
            return Err(Error::arg("reps must be at least 1"));
        }
        if !(self.lambda_rel > 0.0) {
            return Err(Error::arg("lambda_rel must be positive"));
        }
        if !(self.time_limit_secs > 0.0) {
            return Err(Error::arg("time limit must be positive"));
        }
        Ok(())
    }
}

/// One timed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub solver: SolveMode,
    pub n: usize,
    pub rep: usize,
    pub seconds: f64,
    pub iterations: usize,
    pub certified: bool,
    pub timed_out: bool,
}

/// Per-(solver, n) aggregate over repetitions.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryPoint {
    pub n: usize,
    pub mean_seconds: f64,
    pub stddev_seconds: f64,
    pub runs: usize,
    pub certified_runs: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub solver: SolveMode,
    pub points: Vec<SummaryPoint>,
    /// Present only when at least three sizes have every rep certified.
    pub slope: Option<SlopeFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub plan: BenchPlan,
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<SolverSummary>,
}

impl BenchResult {
    /// CSV rows: `solver,n,rep,seconds,iterations,certified`.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("solver,n,rep,seconds,iterations,certified\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.solver, r.n, r.rep, r.seconds, r.iterations, r.certified
            ));
        }
        out
    }

    pub fn summary_for(&self, solver: SolveMode) -> Option<&SolverSummary> {
        self.summaries.iter().find(|s| s.solver == solver)
    }
}

/// Runs the plan, invoking `on_row` after each timed run (or synthesized
/// timeout row).
pub fn run_bench_with(plan: &BenchPlan, mut on_row: impl FnMut(&BenchRow)) -> Result<BenchResult> {
    plan.validate()?;
    let mut rows: Vec<BenchRow> = Vec::new();
    for &solver in &plan.solvers {
        let mut gave_up = false;
        for (n_idx, &n) in plan.n_values.iter().enumerate() {
            for rep in 0..plan.reps {
                if gave_up {
                    let row = BenchRow {
                        solver,
                        n,
                        rep,
                        seconds: plan.time_limit_secs,
                        iterations: 0,
                        certified: false,
                        timed_out: true,
                    };
                    on_row(&row);
                    rows.push(row);
                    continue;
                }
                let row = run_cell(plan, solver, n, n_idx, rep)?;
                if row.timed_out {
                    gave_up = true;
                }
                on_row(&row);
                rows.push(row);
            }
        }
    }
    let summaries = plan
        .solvers
        .iter()
        .map(|&solver| summarize(plan, solver, &rows))
        .collect();
    Ok(BenchResult {
        plan: plan.clone(),
        rows,
        summaries,
    })
}

/// Runs the plan without progress reporting.
pub fn run_bench(plan: &BenchPlan) -> Result<BenchResult> {
    run_bench_with(plan, |_| {})
}

fn run_cell(
    plan: &BenchPlan,
    solver: SolveMode,
    n: usize,
    n_idx: usize,
    rep: usize,
) -> Result<BenchRow> {
    // The same (n, rep) seed across solvers: every solver sees the same data.
    let seed = derive(
        plan.seed,
        Stream::Bench,
        (n_idx as u64) * 10_000 + rep as u64,
    );
    let ds = simulate(&SimSpec {
        k: plan.k,
        d: plan.d,
        t: plan.t,
        n,
        mu: plan.mu,
        snr_db: plan.snr_db,
        seed,
        jitter: true,
    })?;
    let lmax = operator::lambda_max(&ds.shapes, &ds.observed)?;
    if lmax == 0.0 {
        return Err(Error::arg(format!(
            "simulated signal at n={n}, rep={rep} is empty; raise mu or n"
        )));
    }
    let mut settings = SolverSettings::new(solver, LassoConfig::new(plan.lambda_rel * lmax));
    settings.window = plan.window;
    settings.time_limit = Some(Duration::from_secs_f64(plan.time_limit_secs));

    let timer = Instant::now();
    let (_, report) = active_set::solve(&ds.shapes, &ds.observed, &settings)?;
    let seconds = timer.elapsed().as_secs_f64().max(1e-9);
    Ok(BenchRow {
        solver,
        n,
        rep,
        seconds,
        iterations: report.iterations,
        certified: report.certified,
        timed_out: report.timed_out,
    })
}

fn summarize(plan: &BenchPlan, solver: SolveMode, rows: &[BenchRow]) -> SolverSummary {
    let mut points = Vec::new();
    for &n in &plan.n_values {
        let cell: Vec<&BenchRow> = rows
            .iter()
            .filter(|r| r.solver == solver && r.n == n)
            .collect();
        if cell.is_empty() {
            continue;
        }
        let times: Vec<f64> = cell.iter().map(|r| r.seconds).collect();
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / times.len() as f64;
        points.push(SummaryPoint {
            n,
            mean_seconds: mean,
            stddev_seconds: var.sqrt(),
            runs: cell.len(),
            certified_runs: cell.iter().filter(|r| r.certified).count(),
        });
    }
    let clean: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.certified_runs == p.runs)
        .map(|p| (p.n as f64, p.mean_seconds))
        .collect();
    let slope = if clean.len() >= 3 {
        fit_loglog_slope(&clean).ok()
    } else {
        None
    };
    SolverSummary {
        solver,
        points,
        slope,
    }
}

/// Least-squares line through `(log n, log time)`. Needs at least two pairs
/// with positive coordinates and at least two distinct n values.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 2 {
        return Err(Error::arg(format!(
            "slope fit needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(n, t)| !(n > 0.0) || !(t > 0.0)) {
        return Err(Error::arg("slope fit needs positive pairs"));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(n, t)| (n.ln(), t.ln())).collect();
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("slope fit is degenerate: all n equal"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
    })
}
