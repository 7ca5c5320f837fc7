//! Config-driven pipelines behind the CLI subcommands.
//!
//! Trial `k` draws its instance from `problem.seed + k`, its graph from
//! `graph.seed + k` and its initial state from `run.seed + k`, so cells of a
//! table share instances trial by trial.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::analysis::{
    consensus_check, error_bound, mass_residuals, rate_bound, trajectory_gradient_bound, trigger_hold,
    y_consensus_check, ConsensusCheck, ErrorBound, MassResiduals, RateBound, RegionBound, TheoryReport,
    TriggerHold, YConsensus,
};
use crate::config::{ExperimentConfig, GraphFamily};
use crate::engine::{run, InitialState, ScheduleSet, SimConfig, Termination};
use crate::error::{Error, Result};
use crate::graph::{estimate_phi_decay, is_uniformly_strongly_connected, GraphSequence, PhiEstimate};
use crate::log::{writer, LogOptions, MetricsTarget, TrajectoryLog};
use crate::objective::{
    estimate_gradient_bound, generate_least_squares, solve_optimum, LeastSquaresInstance, Objective, Optimum,
};
use crate::schedules::{Schedule, Verdict};

/// Random graph sequences are only analysed up to this horizon.
const RANDOM_THEORY_HORIZON: usize = 2000;

/// Horizons at which the rate bound is assembled.
const RATE_HORIZONS: [usize; 3] = [100, 1000, 10_000];

/// Instance, optimum and graph of one trial.
#[derive(Clone)]
pub struct Trial {
    pub index: u64,
    pub instance: Arc<LeastSquaresInstance>,
    pub optimum: Optimum,
    pub graph: GraphSequence,
    pub init_seed: u64,
}

pub fn prepare_trial(cfg: &ExperimentConfig, k: u64, horizon: usize) -> Result<Trial> {
    let p = &cfg.problem;
    let instance = generate_least_squares(p.m, p.d, p.p, p.sigma, p.seed.wrapping_add(k))?;
    let optimum = solve_optimum(&instance);
    let graph = cfg.graph.build(p.m, cfg.graph.seed.wrapping_add(k), horizon)?;
    Ok(Trial {
        index: k,
        instance: Arc::new(instance),
        optimum,
        graph,
        init_seed: cfg.run.seed.wrapping_add(k),
    })
}

impl Trial {
    pub fn sim_config(
        &self,
        schedules: ScheduleSet,
        horizon: usize,
        termination: Option<Termination>,
        thin: usize,
        cost: bool,
    ) -> SimConfig {
        SimConfig {
            graph: self.graph.clone(),
            objective: Arc::clone(&self.instance) as Arc<dyn Objective>,
            schedules,
            initial: InitialState::Gaussian { seed: self.init_seed },
            z_tilde0: None,
            clip: None,
            horizon,
            termination,
            log: LogOptions {
                thin,
                optimum: Some(MetricsTarget {
                    x_star: self.optimum.x.clone(),
                    f_star: self.optimum.value,
                    cost,
                }),
            },
        }
    }
}

/// Theory checks of one run.
pub struct TheoryOutcome {
    pub phi: PhiEstimate,
    pub report: TheoryReport,
    pub y_consensus: YConsensus,
    pub consensus: ConsensusCheck,
    /// `(T, bound, measured max_i f(z̃_i(T+1)) − f*)`.
    pub rate: Vec<(RateBound, f64)>,
}

pub struct RunOutcome {
    pub trial: Trial,
    pub schedules: ScheduleSet,
    pub log: TrajectoryLog,
    pub region: RegionBound,
    pub theory: Option<TheoryOutcome>,
    /// Why theory checks were skipped, if they were.
    pub theory_note: Option<String>,
    pub mass: MassResiduals,
    pub trigger: TriggerHold,
    pub e_bound: ErrorBound,
}

/// One run of trial 0 with the `[schedules]` and `[run]` blocks.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let schedules: ScheduleSet = cfg.schedules.into();
    let horizon = if cfg.run.terminate { cfg.run.cap } else { cfg.run.horizon };
    let trial = prepare_trial(cfg, 0, horizon)?;
    let mut sim = trial.sim_config(schedules, cfg.run.horizon, cfg.run.termination(), cfg.run.thin, true);
    if cfg.run.clip {
        sim.clip = Some(initial_region_bound(&trial, &sim, cfg.run.bound_samples)?);
    }
    let log = run(&sim)?;
    let region = trajectory_gradient_bound(&log, trial.instance.as_ref(), &trial.optimum.x, cfg.run.bound_samples, trial.init_seed)?;
    let (theory, theory_note) = if cfg.output.theory {
        match theory_checks(cfg, &trial, &schedules, &log, &region) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("disabled in [output]".into()))
    };
    Ok(RunOutcome {
        mass: mass_residuals(&log),
        trigger: trigger_hold(&log),
        e_bound: error_bound(&log, &schedules.tau),
        trial,
        schedules,
        log,
        region,
        theory,
        theory_note,
    })
}

/// `D` on a ball of twice the largest initial distance to `x*`, used for clipping.
fn initial_region_bound(trial: &Trial, sim: &SimConfig, samples: usize) -> Result<f64> {
    let x0 = match &sim.initial {
        InitialState::Gaussian { seed } => crate::engine::gaussian_initial_state(sim.graph.node_count(), trial.instance.dim(), *seed),
        InitialState::Given(v) => v.clone(),
    };
    let far = crate::analysis::metrics::max_distance(&x0, trial.instance.dim(), &trial.optimum.x);
    let radius = if far > 0.0 { 2.0 * far } else { 1.0 };
    Ok(estimate_gradient_bound(trial.instance.as_ref(), &trial.optimum.x, radius, samples, trial.init_seed)?.max)
}

fn theory_checks(
    cfg: &ExperimentConfig,
    trial: &Trial,
    schedules: &ScheduleSet,
    log: &TrajectoryLog,
    region: &RegionBound,
) -> Result<TheoryOutcome> {
    let horizon = log.horizon();
    if cfg.graph.kind == GraphFamily::Random && horizon > RANDOM_THEORY_HORIZON {
        return Err(Error::invalid(format!(
            "theory checks on random graph sequences are limited to {RANDOM_THEORY_HORIZON} rounds"
        )));
    }
    let phi = estimate_phi_decay(&trial.graph, horizon)?;
    let report = TheoryReport::new(log, &phi, &schedules.zeta, region.effective())?;
    let y_consensus = y_consensus_check(log, &phi, &report.m_zeta, &report.beta);
    let consensus = consensus_check(log, &report, schedules);
    let mut rate = Vec::new();
    if schedules.alpha.is_inverse_sqrt() && schedules.tau.total_sum().finite().is_some() {
        for t in RATE_HORIZONS.into_iter().filter(|&t| t < horizon) {
            let bound = rate_bound(log, &report, schedules, &trial.optimum.x, t)?;
            if let Some(measured) = log.metrics.get(t + 1).and_then(|m| m.f_gap_max) {
                rate.push((bound, measured));
            }
        }
    }
    Ok(TheoryOutcome {
        phi,
        report,
        y_consensus,
        consensus,
        rate,
    })
}

/// Writes `metrics.csv`, `trajectory.csv`, `theory.csv` and `summary.txt`.
pub fn write_run_outputs(outcome: &RunOutcome, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join("metrics.csv");
    outcome.log.write_metrics_csv(&path)?;
    written.push(path);
    if cfg.output.trajectory {
        let path = dir.join("trajectory.csv");
        outcome.log.write_trajectory_csv(&path)?;
        written.push(path);
    }
    if let Some(theory) = &outcome.theory {
        let path = dir.join("theory.csv");
        write_theory_csv(theory, &path)?;
        written.push(path);
    }
    let path = dir.join("summary.txt");
    std::fs::write(&path, run_summary(outcome)).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// `t, beta, disagreement_bound, disagreement_measured, y_dev`.
fn write_theory_csv(theory: &TheoryOutcome, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "beta", "disagreement_bound", "disagreement_measured", "y_dev"])?;
    let c = &theory.consensus;
    let y = &theory.y_consensus;
    for (k, &t) in c.t.iter().enumerate() {
        let y_dev = y.t.get(k).filter(|&&ty| ty == t).map(|_| y.deviation[k]);
        w.write_record([
            t.to_string(),
            theory.report.beta.beta[t].to_string(),
            c.bound[k].to_string(),
            c.measured[k].to_string(),
            y_dev.map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn verdict_lines(schedules: &ScheduleSet, verdicts: &[Verdict; 3]) -> String {
    let mut s = String::new();
    for ((name, sched), v) in [("alpha", schedules.alpha), ("tau", schedules.tau), ("zeta", schedules.zeta)]
        .iter()
        .zip(verdicts)
    {
        let _ = writeln!(s, "{name:<6}{:<28}{v}", sched.to_string());
    }
    s
}

pub fn run_summary(o: &RunOutcome) -> String {
    let log = &o.log;
    let mut s = String::new();
    let _ = writeln!(s, "# schedules");
    s += &verdict_lines(&o.schedules, &log.verdicts);
    let _ = writeln!(s, "\n# run");
    let _ = writeln!(s, "rounds        {}", log.horizon());
    let _ = writeln!(s, "N_x           {}", log.mean_x_triggers());
    let _ = writeln!(s, "N_y           {}", log.mean_y_triggers());
    let (mx, my) = log.messages();
    let _ = writeln!(s, "messages      x {mx}, y {my}");
    match (log.k_f, log.capped) {
        (Some(k), _) => {
            let _ = writeln!(s, "k_f           {k}");
        }
        (None, true) => {
            let _ = writeln!(s, "k_f           capped at {}", log.horizon());
        }
        _ => {}
    }
    if let Some(m) = log.metrics.last() {
        let _ = writeln!(s, "R_d           {}", m.r_d);
        if let Some(rf) = m.r_f {
            let _ = writeln!(s, "R_f           {rf}");
        }
        let _ = writeln!(s, "R_c           {}", m.r_c);
    }
    if log.degenerate_distance {
        let _ = writeln!(s, "note          initial distance is zero; R_d reported as 0");
    }
    let _ = writeln!(s, "\n# invariants");
    let _ = writeln!(s, "mass x        {:e}", o.mass.x);
    let _ = writeln!(s, "mass y        {:e}", o.mass.y);
    let _ = writeln!(
        s,
        "trigger hold  {} x / {} y violations",
        o.trigger.x_violations.len(),
        o.trigger.y_violations.len()
    );
    let _ = writeln!(s, "e bound       {} of {} violated", o.e_bound.violations.len(), o.e_bound.checked);
    let _ = writeln!(s, "\n# theory (empirical constants)");
    let b = &o.region.bound;
    let _ = writeln!(
        s,
        "D region      center x*, radius {}; sampled {}, observed {}{}",
        b.radius,
        b.max,
        o.region.observed_max,
        if o.region.contained { "" } else { " (exceeds sample)" }
    );
    match (&o.theory, &o.theory_note) {
        (Some(t), _) => {
            s += &t.report.summary();
            let _ = writeln!(s, "y consensus   {} of {} rounds violated", t.y_consensus.violations.len(), t.y_consensus.t.len());
            let _ = writeln!(s, "disagreement  {} (t, agent) violations over {} rounds", t.consensus.violations.len(), t.consensus.t.len());
            if let Some(c) = &t.consensus.corollary {
                let _ = writeln!(
                    s,
                    "summed error  {} vs summed bound {} vs closed form {}{}",
                    c.weighted_measured,
                    c.summed_bound,
                    c.closed_form,
                    if c.alpha_matches { "" } else { " (closed form assumes alpha = 1/sqrt(t))" }
                );
            }
            for (rb, measured) in &t.rate {
                let _ = writeln!(
                    s,
                    "rate T={:<6} measured {measured} <= bound {} (J1 {}, J2 {}, J3 {})",
                    rb.horizon, rb.value, rb.j1, rb.j2, rb.j3
                );
            }
        }
        (None, Some(note)) => {
            let _ = writeln!(s, "skipped       {note}");
        }
        (None, None) => {}
    }
    s
}

/// One `(τ, ζ)` cell of the trigger table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Cell {
    pub tau: Schedule,
    pub zeta: Schedule,
    pub nx_mean: f64,
    pub ny_mean: f64,
    /// Capped trials count as the cap.
    pub kf_mean: f64,
    pub trials: usize,
    pub capped: usize,
}

struct TrialResult {
    cell: usize,
    trial: u64,
    nx: f64,
    ny: f64,
    k_f: usize,
    capped: bool,
}

/// Runs every `(τ, ζ)` cell of `[table1]` for `run.trials` trials until
/// `R_d < run.eps` or `run.cap`.
pub fn table1(cfg: &ExperimentConfig) -> Result<Vec<Table1Cell>> {
    let cells: Vec<(Schedule, Schedule)> = cfg
        .table1
        .taus
        .iter()
        .flat_map(|&tau| cfg.table1.zetas.iter().map(move |&zeta| (tau, zeta)))
        .collect();
    let term = Termination {
        eps: cfg.run.eps,
        cap: cfg.run.cap,
    };
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.run.trials as u64).map(move |k| (c, k)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(c, k)| {
            let (tau, zeta) = cells[c];
            let trial = prepare_trial(cfg, k, term.cap)?;
            let schedules = ScheduleSet {
                alpha: cfg.table1.alpha,
                tau,
                zeta,
            };
            let log = run(&trial.sim_config(schedules, term.cap, Some(term), 0, false))?;
            Ok(TrialResult {
                cell: c,
                trial: k,
                nx: log.mean_x_triggers(),
                ny: log.mean_y_triggers(),
                k_f: log.k_f.unwrap_or(term.cap),
                capped: log.capped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| (r.cell, r.trial));
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(tau, zeta))| {
            let rs: Vec<&TrialResult> = results.iter().filter(|r| r.cell == c).collect();
            let n = rs.len() as f64;
            Table1Cell {
                tau,
                zeta,
                nx_mean: rs.iter().map(|r| r.nx).sum::<f64>() / n,
                ny_mean: rs.iter().map(|r| r.ny).sum::<f64>() / n,
                kf_mean: rs.iter().map(|r| r.k_f as f64).sum::<f64>() / n,
                trials: rs.len(),
                capped: rs.iter().filter(|r| r.capped).count(),
            }
        })
        .collect())
}

/// `tau, zeta, Nx_mean, Ny_mean, kf_mean, trials, capped`.
pub fn write_table1_csv(cells: &[Table1Cell], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["tau", "zeta", "Nx_mean", "Ny_mean", "kf_mean", "trials", "capped"])?;
    for c in cells {
        w.write_record([
            c.tau.to_string(),
            c.zeta.to_string(),
            c.nx_mean.to_string(),
            c.ny_mean.to_string(),
            c.kf_mean.to_string(),
            c.trials.to_string(),
            c.capped.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `R_f(t)` and `R_c(t)` of one `[curves]` variant, `t ∈ [0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    pub schedules: ScheduleSet,
    pub verdicts: [Verdict; 3],
    pub r_f: Vec<f64>,
    pub r_c: Vec<f64>,
    /// `max_i (f(z̃_i(t)) − f*)`.
    pub f_gap_max: Vec<f64>,
}

pub fn curves(cfg: &ExperimentConfig) -> Result<Vec<CurveSeries>> {
    let horizon = cfg.curves.horizon;
    let trial = prepare_trial(cfg, 0, horizon)?;
    cfg.curves
        .variants
        .par_iter()
        .map(|v| {
            let schedules = ScheduleSet {
                alpha: cfg.curves.alpha,
                tau: v.tau,
                zeta: v.zeta,
            };
            let log = run(&trial.sim_config(schedules, horizon, None, 0, true))?;
            Ok(CurveSeries {
                label: v.label.clone(),
                schedules,
                verdicts: log.verdicts.clone(),
                r_f: log.metrics.iter().map(|m| m.r_f.unwrap_or(f64::NAN)).collect(),
                r_c: log.metrics.iter().map(|m| m.r_c).collect(),
                f_gap_max: log.metrics.iter().map(|m| m.f_gap_max.unwrap_or(f64::NAN)).collect(),
            })
        })
        .collect()
}

/// `t, R_f, R_c` for `t = 1..=T`.
pub fn write_curve_csv(series: &CurveSeries, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "R_f", "R_c"])?;
    for t in 1..series.r_f.len() {
        w.write_record([t.to_string(), series.r_f[t].to_string(), series.r_c[t].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Assumption verdicts and a fast invariant suite.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub schedules: ScheduleSet,
    pub verdicts: [Verdict; 3],
    pub window: usize,
    pub connected: bool,
    pub rounds: usize,
    pub mass: MassResiduals,
    pub trigger: TriggerHold,
    pub e_bound: ErrorBound,
    /// Largest state deviation of a zero-threshold run from plain gradient-push.
    pub reduction_error: f64,
    /// Invariant failures (bugs), as opposed to violated assumptions.
    pub failures: Vec<String>,
}

pub const MASS_TOLERANCE_X: f64 = 1e-9;
pub const MASS_TOLERANCE_Y: f64 = 1e-12;
pub const REDUCTION_TOLERANCE: f64 = 1e-12;

/// Runs `rounds` rounds with the configured schedules plus a zero-threshold
/// run compared against [`plain_gradient_push`].
pub fn check(cfg: &ExperimentConfig, rounds: usize) -> Result<CheckReport> {
    let schedules: ScheduleSet = cfg.schedules.into();
    let trial = prepare_trial(cfg, 0, rounds.max(cfg.graph.window))?;
    let window = cfg.graph.window;
    let connected = is_uniformly_strongly_connected(&trial.graph, window, rounds.max(window));
    let log = run(&trial.sim_config(schedules, rounds, None, 1, false))?;
    let mass = mass_residuals(&log);
    let trigger = trigger_hold(&log);
    let e_bound = error_bound(&log, &schedules.tau);

    let zero = ScheduleSet {
        tau: Schedule::Zero,
        zeta: Schedule::Zero,
        ..schedules
    };
    let zlog = run(&trial.sim_config(zero, rounds, None, 1, false))?;
    let x0 = zlog.initial().x.clone();
    let reference = plain_gradient_push(&trial.graph, trial.instance.as_ref(), &schedules.alpha, &x0, rounds);
    let reduction_error = zlog
        .snapshots
        .iter()
        .zip(&reference)
        .map(|(s, (x, y))| {
            let dx = s.x.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dy = s.y.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            dx.max(dy)
        })
        .fold(0.0, f64::max);

    let mut failures = Vec::new();
    if !(mass.x <= MASS_TOLERANCE_X) {
        failures.push(format!("x-mass identity residual {:e} > {MASS_TOLERANCE_X:e}", mass.x));
    }
    if !(mass.y <= MASS_TOLERANCE_Y) {
        failures.push(format!("y-mass identity residual {:e} > {MASS_TOLERANCE_Y:e}", mass.y));
    }
    if !trigger.x_violations.is_empty() || !trigger.y_violations.is_empty() {
        failures.push(format!(
            "trigger hold violated in {} rounds",
            trigger.x_violations.len() + trigger.y_violations.len()
        ));
    }
    if !e_bound.violations.is_empty() {
        failures.push(format!("e bound violated {} times", e_bound.violations.len()));
    }
    if !(reduction_error <= REDUCTION_TOLERANCE) {
        failures.push(format!("zero-threshold run deviates from plain gradient-push by {reduction_error:e}"));
    }
    Ok(CheckReport {
        verdicts: schedules.verdicts(),
        schedules,
        window,
        connected,
        rounds,
        mass,
        trigger,
        e_bound,
        reduction_error,
        failures,
    })
}

pub fn check_summary(r: &CheckReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# assumptions (violations are allowed and flagged)");
    s += &verdict_lines(&r.schedules, &r.verdicts);
    let _ = writeln!(
        s,
        "graph {}-window strongly connected: {}",
        r.window,
        if r.connected { "yes" } else { "no (flagged)" }
    );
    let _ = writeln!(s, "\n# invariants over {} rounds", r.rounds);
    let _ = writeln!(s, "mass x residual   {:e}", r.mass.x);
    let _ = writeln!(s, "mass y residual   {:e}", r.mass.y);
    let _ = writeln!(
        s,
        "trigger hold      {} violations",
        r.trigger.x_violations.len() + r.trigger.y_violations.len()
    );
    let _ = writeln!(s, "e bound           {} of {} violated", r.e_bound.violations.len(), r.e_bound.checked);
    let _ = writeln!(s, "zero-threshold    max deviation {:e}", r.reduction_error);
    if r.failures.is_empty() {
        let _ = writeln!(s, "\nall invariants hold");
    } else {
        for f in &r.failures {
            let _ = writeln!(s, "\ninvariant failed: {f}");
        }
    }
    s
}

/// Straight-line gradient-push without triggering: `(x(t), y(t))` for
/// `t ∈ [0, rounds]`, looping over dense mixing matrices.
pub fn plain_gradient_push(
    graph: &GraphSequence,
    obj: &dyn Objective,
    alpha: &Schedule,
    x0: &[f64],
    rounds: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let m = graph.node_count();
    let d = obj.dim();
    let mut x = x0.to_vec();
    let mut y = vec![1.0; m];
    let mut out = vec![(x.clone(), y.clone())];
    let mut g = vec![0.0; d];
    for t in 0..rounds {
        let a = graph.mixing(t);
        let a = a.dense();
        let mut w = vec![0.0; m * d];
        let mut y_next = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                let aij = a[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                y_next[i] += aij * y[j];
                for c in 0..d {
                    w[i * d + c] += aij * x[j * d + c];
                }
            }
        }
        let step = alpha.value(t + 1);
        for i in 0..m {
            let z: Vec<f64> = (0..d).map(|c| w[i * d + c] / y_next[i]).collect();
            obj.gradient(i, &z, &mut g);
            for c in 0..d {
                x[i * d + c] = w[i * d + c] - step * g[c];
            }
        }
        y = y_next;
        out.push((x.clone(), y.clone()));
    }
    out
}
