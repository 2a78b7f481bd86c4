//! Active-set Lasso solvers.
//!
//! All three variants grow an active set one worst-violating coordinate at a
//! time and re-solve a restricted Lasso after each insertion:
//!
//! * naive: optimality scans over the whole signal, subproblem over the
//!   whole active set;
//! * group: full-signal scans, but only the overlap group containing the
//!   new coordinate is re-solved (groups more than `t` samples apart use
//!   disjoint signal segments, so their blocks separate exactly);
//! * windowed: scans restricted to a sliding temporal window of width
//!   `w > t`, advanced left to right, with a mandatory full certification
//!   pass at the end. Per-iteration scan cost is proportional to the window,
//!   not the signal, which is what makes total work linear in `n`.

use crate::activation::{Activation, ActivationSet};
use crate::error::{Error, Result};
use crate::lasso::{self, LassoConfig, QuadraticSubproblem, AMPLITUDE_FLOOR};
use crate::operator;
use crate::report::{SolveMode, SolveReport};
use crate::shapes::ShapeBank;
use crate::signal::MultiSignal;
use std::ops::Range;
use std::time::{Duration, Instant};

/// Everything a solver run needs besides the data.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub mode: SolveMode,
    pub lasso: LassoConfig,
    /// Slack added to lambda in the optimality test; a zero coordinate is a
    /// violator when its |correlation| reaches `lambda + kkt_tol`.
    pub kkt_tol: f64,
    /// Scan window width for the windowed mode; defaults to `10 * t`.
    pub window: Option<usize>,
    /// Cap on active-set insertions; defaults to `k * n`.
    pub max_iterations: Option<usize>,
    pub time_limit: Option<Duration>,
}

impl SolverSettings {
    pub fn new(mode: SolveMode, lasso: LassoConfig) -> Self {
        let kkt_tol = 1e-6 * lasso.lambda;
        SolverSettings {
            mode,
            lasso,
            kkt_tol,
            window: None,
            max_iterations: None,
            time_limit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lasso.validate()?;
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return Err(Error::arg(format!(
                "kkt_tol must be positive, got {}",
                self.kkt_tol
            )));
        }
        Ok(())
    }
}

/// A maximal chain of active coordinates whose consecutive samples are at
/// most `t` apart, pooled over neurons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapGroup {
    /// `(neuron, sample)` members in canonical order (sample, then neuron).
    pub members: Vec<(usize, usize)>,
    /// Inclusive sample span `[min_sample, max_sample]`.
    pub span: (usize, usize),
}

/// Partitions a support into overlap groups by repeated insertion, using the
/// same merge rule the solver applies.
pub fn overlap_partition(acts: &ActivationSet, t: usize) -> Vec<OverlapGroup> {
    let mut groups: Vec<GroupRec> = Vec::new();
    let mut coords: Vec<Coord> = Vec::new();
    for a in acts.iter() {
        coords.push(Coord {
            neuron: a.neuron,
            sample: a.sample,
            value: a.amplitude,
        });
        merge_into_groups(&mut groups, &coords, coords.len() - 1, t);
    }
    groups
        .into_iter()
        .map(|g| {
            let mut members: Vec<(usize, usize)> = g
                .members
                .iter()
                .map(|&i| (coords[i].neuron, coords[i].sample))
                .collect();
            members.sort_by_key(|&(r, j)| (j, r));
            OverlapGroup {
                members,
                span: g.span,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Coord {
    neuron: usize,
    sample: usize,
    value: f64,
}

#[derive(Debug, Clone)]
struct GroupRec {
    /// Indices into the engine's coordinate list.
    members: Vec<usize>,
    /// Inclusive sample span.
    span: (usize, usize),
}

/// Inserts coordinate `idx` into the group list, merging every group within
/// sample distance `t`, and returns the index of the group it landed in.
/// Groups stay sorted by span and pairwise separated by gaps > t.
fn merge_into_groups(groups: &mut Vec<GroupRec>, coords: &[Coord], idx: usize, t: usize) -> usize {
    let j = coords[idx].sample;
    // A group contains a member within t of j iff its span, padded by t,
    // covers j (inside the span, consecutive members are at most t apart).
    let lo = groups.partition_point(|g| g.span.1 + t < j);
    let hi = groups.partition_point(|g| g.span.0 <= j + t);
    if lo == hi {
        groups.insert(
            lo,
            GroupRec {
                members: vec![idx],
                span: (j, j),
            },
        );
        return lo;
    }
    let mut merged = GroupRec {
        members: vec![idx],
        span: (j, j),
    };
    for g in groups.drain(lo..hi) {
        merged.members.extend(g.members);
        merged.span.0 = merged.span.0.min(g.span.0);
        merged.span.1 = merged.span.1.max(g.span.1);
    }
    groups.insert(lo, merged);
    lo
}

/// Largest absolute residual correlation over coordinates outside the
/// support of `acts`: the optimality certificate for a candidate solution.
pub fn kkt_certificate(shapes: &ShapeBank, y: &MultiSignal, acts: &ActivationSet) -> Result<f64> {
    if acts.k() != shapes.k() {
        return Err(Error::dim(format!(
            "activation set has k={}, shape bank has k={}",
            acts.k(),
            shapes.k()
        )));
    }
    let res = operator::residual(shapes, y, acts)?;
    let n = y.n();
    let mut active = vec![false; shapes.k() * n];
    for a in acts.iter() {
        active[a.neuron * n + a.sample] = true;
    }
    Ok(scan_window(shapes, &res, 0..n, &active).map_or(0.0, |(_, _, g)| g))
}

/// Finds the coordinate in `window x [0, k)` outside `active` with the
/// largest absolute correlation against `sig`. Ties break toward the
/// smallest sample, then the smallest neuron. Returns `None` only when every
/// coordinate in the window is active.
fn scan_window(
    shapes: &ShapeBank,
    sig: &MultiSignal,
    window: Range<usize>,
    active: &[bool],
) -> Option<(usize, usize, f64)> {
    let n = sig.n();
    let t = shapes.t();
    let k = shapes.k();
    let d = shapes.d();
    let mut best: Option<(usize, usize, f64)> = None;
    for j in window {
        let span = t.min(n - j);
        for r in 0..k {
            if active[r * n + j] {
                continue;
            }
            let mut acc = 0.0;
            for p in 0..d {
                let wf = shapes.waveform(r, p);
                let seg = &sig.electrode(p)[j..j + span];
                for (x, w) in seg.iter().zip(&wf[..span]) {
                    acc += x * w;
                }
            }
            let mag = acc.abs();
            if best.map_or(true, |(_, _, g)| mag > g) {
                best = Some((r, j, mag));
            }
        }
    }
    best
}

struct Engine<'a> {
    shapes: &'a ShapeBank,
    y: &'a MultiSignal,
    n: usize,
    t: usize,
    lambda: f64,
    threshold: f64,
    sub_cfg: LassoConfig,
    gram_table: operator::GramTable,
    coords: Vec<Coord>,
    active: Vec<bool>,
    groups: Vec<GroupRec>,
    residual: MultiSignal,
    report: SolveReport,
    iter_cap: usize,
    deadline: Option<Instant>,
    start_time: Instant,
}

enum Budget {
    Ok,
    IterationCap,
    TimedOut,
}

impl<'a> Engine<'a> {
    fn new(shapes: &'a ShapeBank, y: &'a MultiSignal, settings: &SolverSettings) -> Result<Self> {
        settings.validate()?;
        if y.d() != shapes.d() {
            return Err(Error::dim(format!(
                "signal has d={}, shape bank has d={}",
                y.d(),
                shapes.d()
            )));
        }
        if y.n() < shapes.t() {
            return Err(Error::dim(format!(
                "signal length n={} is shorter than shape length t={}",
                y.n(),
                shapes.t()
            )));
        }
        let n = y.n();
        let k = shapes.k();
        let start_time = Instant::now();
        Ok(Engine {
            shapes,
            y,
            n,
            t: shapes.t(),
            lambda: settings.lasso.lambda,
            threshold: settings.lasso.lambda + settings.kkt_tol,
            sub_cfg: LassoConfig {
                lambda: settings.lasso.lambda,
                fista_tol: settings.lasso.fista_tol.min(1e-10),
                max_iter: 1_000,
            },
            gram_table: operator::GramTable::build(shapes),
            coords: Vec::new(),
            active: vec![false; k * n],
            groups: Vec::new(),
            residual: y.clone(),
            report: SolveReport::new(settings.mode, settings.lasso.lambda, settings.kkt_tol),
            iter_cap: settings.max_iterations.unwrap_or(k * n),
            deadline: settings.time_limit.map(|lim| start_time + lim),
            start_time,
        })
    }

    fn budget(&self) -> Budget {
        if self.report.iterations >= self.iter_cap {
            return Budget::IterationCap;
        }
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                return Budget::TimedOut;
            }
        }
        Budget::Ok
    }

    fn insert(&mut self, neuron: usize, sample: usize) -> usize {
        let flat = neuron * self.n + sample;
        debug_assert!(!self.active[flat], "coordinate inserted twice");
        self.active[flat] = true;
        self.coords.push(Coord {
            neuron,
            sample,
            value: 0.0,
        });
        let idx = self.coords.len() - 1;
        merge_into_groups(&mut self.groups, &self.coords, idx, self.t)
    }

    /// Re-solves the Lasso restricted to the given coordinate indices, with
    /// all other active coordinates held fixed (their contribution lives in
    /// the residual).
    fn solve_block(&mut self, member_idx: &[usize]) {
        let mut order: Vec<usize> = member_idx.to_vec();
        order.sort_by_key(|&i| (self.coords[i].sample, self.coords[i].neuron));
        let columns: Vec<(usize, usize)> = order
            .iter()
            .map(|&i| (self.coords[i].neuron, self.coords[i].sample))
            .collect();
        let current: Vec<f64> = order.iter().map(|&i| self.coords[i].value).collect();
        let sub = QuadraticSubproblem::from_residual(
            self.shapes,
            &self.gram_table,
            &self.residual,
            &columns,
            &current,
        );
        // Blocks past the polish limit arise in dense regimes (tiny lambda
        // under heavy noise) where intermediate precision buys nothing: the
        // block is re-solved on every later insertion anyway. Bound their
        // per-solve effort; final accuracy is still audited by the
        // certificate scan.
        let mut cfg = self.sub_cfg.clone();
        if columns.len() > lasso::POLISH_MAX_DIM {
            cfg.max_iter = cfg.max_iter.min(200);
        }
        let out = lasso::fista_sub_full(&sub, &cfg, &current);
        self.report.subproblem_solves += 1;
        self.report.fista_iterations += out.iterations;
        if !out.converged {
            self.report.subproblem_failures += 1;
        }
        for (pos, &i) in order.iter().enumerate() {
            let delta = out.x[pos] - self.coords[i].value;
            if delta != 0.0 {
                operator::accumulate_column(
                    &mut self.residual,
                    self.shapes,
                    self.coords[i].neuron,
                    self.coords[i].sample,
                    -delta,
                );
                self.coords[i].value = out.x[pos];
            }
        }
    }

    fn scan(&self, window: Range<usize>) -> Option<(usize, usize, f64)> {
        scan_window(self.shapes, &self.residual, window, &self.active)
    }

    /// Runs the naive or group loop: full-signal scans, block re-solves.
    fn run_full_scan(&mut self, group_only: bool) {
        loop {
            match self.budget() {
                Budget::Ok => {}
                Budget::IterationCap => return,
                Budget::TimedOut => {
                    self.report.timed_out = true;
                    return;
                }
            }
            match self.scan(0..self.n) {
                Some((r, j, g)) if g >= self.threshold => {
                    let gidx = self.insert(r, j);
                    self.report.iterations += 1;
                    let block: Vec<usize> = if group_only {
                        self.groups[gidx].members.clone()
                    } else {
                        (0..self.coords.len()).collect()
                    };
                    self.solve_block(&block);
                }
                other => {
                    self.report.kkt_violation = other.map_or(0.0, |(_, _, g)| g);
                    self.report.certified = true;
                    return;
                }
            }
        }
    }

    /// Runs the sliding-window loop.
    fn run_windowed(&mut self, w: usize) {
        let n = self.n;
        let t = self.t;
        let mut start = 0usize;
        let mut end = w;
        let mut closed_frontier = 0usize;
        'outer: loop {
            // Clear every violation inside the current window.
            loop {
                match self.budget() {
                    Budget::Ok => {}
                    Budget::IterationCap => return,
                    Budget::TimedOut => {
                        self.report.timed_out = true;
                        return;
                    }
                }
                match self.scan(start..end.min(n)) {
                    Some((r, j, g)) if g >= self.threshold => {
                        debug_assert!(
                            j + t > closed_frontier,
                            "insertion at sample {j} behind frozen frontier {closed_frontier}"
                        );
                        let gidx = self.insert(r, j);
                        self.report.iterations += 1;
                        let block = self.groups[gidx].members.clone();
                        self.solve_block(&block);
                    }
                    _ => break,
                }
            }
            if end >= n {
                // Mandatory full certification pass; on failure re-enter at
                // the earliest violating sample.
                match self.scan(0..n) {
                    Some((_, j, g)) if g >= self.threshold => {
                        self.report.recertifications += 1;
                        start = j.saturating_sub(t);
                        end = start + w;
                        closed_frontier = start;
                    }
                    other => {
                        self.report.kkt_violation = other.map_or(0.0, |(_, _, g)| g);
                        self.report.certified = true;
                        break 'outer;
                    }
                }
            } else if self.groups.last().is_some_and(|g| g.span.1 + t >= end) {
                // The rightmost group reaches into the last t samples of the
                // window; grow the window so the group can complete.
                end += w;
                self.report.window_extensions += 1;
            } else {
                // Violation-free and no group near the edge: slide right,
                // keeping an overlap of t to cover cross-boundary
                // correlations.
                start = end - t;
                end = start + w;
                closed_frontier = start;
            }
        }
    }

    fn finalize(mut self) -> Result<(ActivationSet, SolveReport)> {
        // Drift of the incrementally maintained residual against a fresh
        // render of every active coordinate (including sub-floor ones).
        let mut fresh = self.y.clone();
        for c in &self.coords {
            if c.value != 0.0 {
                operator::accumulate_column(&mut fresh, self.shapes, c.neuron, c.sample, -c.value);
            }
        }
        self.report.residual_drift = fresh.max_abs_diff(&self.residual);

        let entries: Vec<Activation> = self
            .coords
            .iter()
            .filter(|c| c.value.abs() > AMPLITUDE_FLOOR)
            .map(|c| Activation {
                neuron: c.neuron,
                sample: c.sample,
                amplitude: c.value,
            })
            .collect();
        let solution = ActivationSet::new(self.shapes.k(), self.n, entries)?;
        self.report.objective = lasso::objective(self.shapes, self.y, &solution, self.lambda)?;
        self.report.solve_seconds = self.start_time.elapsed().as_secs_f64();
        Ok((solution, self.report))
    }
}

/// Active set with full-signal scans and whole-set subproblems.
pub fn naive_active_set(
    shapes: &ShapeBank,
    y: &MultiSignal,
    settings: &SolverSettings,
) -> Result<(ActivationSet, SolveReport)> {
    expect_mode(settings, SolveMode::AsNaive)?;
    let mut engine = Engine::new(shapes, y, settings)?;
    engine.run_full_scan(false);
    engine.finalize()
}

/// Active set with full-signal scans and group-restricted subproblems.
pub fn group_active_set(
    shapes: &ShapeBank,
    y: &MultiSignal,
    settings: &SolverSettings,
) -> Result<(ActivationSet, SolveReport)> {
    expect_mode(settings, SolveMode::AsGroup)?;
    let mut engine = Engine::new(shapes, y, settings)?;
    engine.run_full_scan(true);
    engine.finalize()
}

/// Active set with scans restricted to a sliding window, plus a final
/// full-signal certification pass.
pub fn windowed_active_set(
    shapes: &ShapeBank,
    y: &MultiSignal,
    settings: &SolverSettings,
) -> Result<(ActivationSet, SolveReport)> {
    expect_mode(settings, SolveMode::AsWindow)?;
    let w = settings.window.unwrap_or(10 * shapes.t());
    if w <= shapes.t() {
        return Err(Error::arg(format!(
            "window width {w} must exceed the shape length t={}",
            shapes.t()
        )));
    }
    let mut engine = Engine::new(shapes, y, settings)?;
    engine.run_windowed(w);
    engine.finalize()
}

/// Dispatches to the solver selected by `settings.mode`.
pub fn solve(
    shapes: &ShapeBank,
    y: &MultiSignal,
    settings: &SolverSettings,
) -> Result<(ActivationSet, SolveReport)> {
    match settings.mode {
        SolveMode::FistaFull => lasso::fista_full(shapes, y, &settings.lasso, settings.kkt_tol),
        SolveMode::AsNaive => naive_active_set(shapes, y, settings),
        SolveMode::AsGroup => group_active_set(shapes, y, settings),
        SolveMode::AsWindow => windowed_active_set(shapes, y, settings),
    }
}

fn expect_mode(settings: &SolverSettings, mode: SolveMode) -> Result<()> {
    if settings.mode != mode {
        return Err(Error::arg(format!(
            "settings request mode {} but {} was invoked",
            settings.mode, mode
        )));
    }
    Ok(())
}
