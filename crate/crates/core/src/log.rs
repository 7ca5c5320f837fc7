//! Per-round trajectory records and their CSV export.
//!
//! Every round leaves a [`RoundSummary`]. Full agent states are kept at round
//! 0, every `thin` rounds and at the final round. With an optimum supplied,
//! `R_d`, `R_c` and (optionally) `R_f` are evaluated online for every round.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::analysis::metrics;
use crate::engine::{Engine, Termination};
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::schedules::Verdict;

/// State of every agent at the end of round `t` (row-major `m × d` vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub t: usize,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub z_tilde: Vec<f64>,
    /// Empty at `t = 0`.
    pub x_triggered: Vec<bool>,
    pub y_triggered: Vec<bool>,
    /// `‖e_i(t)‖`, `e_i(t) = ŵ_i(t) − Σ_j a_ij(t−1) x_j(t−1)`. Empty at `t = 0`.
    pub e_norm: Vec<f64>,
    /// `d_i(t−1) = Σ_j a_ij(t−1)`. Empty at `t = 0`.
    pub row_sum: Vec<f64>,
}

impl AgentSnapshot {
    pub fn agents(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.len() / self.y.len()
    }

    pub fn z_hat_of(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.z_hat[i * d..(i + 1) * d]
    }
}

/// Aggregates of round `t` (the round just completed).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub t: usize,
    /// `α(t)`, `τ(t)`, `ζ(t)` as used in this round.
    pub alpha: f64,
    pub tau: f64,
    pub zeta: f64,
    pub x_triggers: usize,
    pub y_triggers: usize,
    pub x_messages: u64,
    pub y_messages: u64,
    /// `1ᵀx(t)`.
    pub mass_x: Vec<f64>,
    /// `1ᵀy(t)`.
    pub mass_y: f64,
    /// `1ᵀθ(t)`, `θ = ŷ − y` after triggering.
    pub theta: f64,
    /// `1ᵀθ_x(t)`, `θ_x = x̂ − x` after triggering.
    pub theta_x: Vec<f64>,
    /// `1ᵀθ_x(t − 1)`.
    pub theta_x_prev: Vec<f64>,
    /// `Σ_i ∇f_i(ẑ_i(t))` as applied (after any clipping).
    pub grad_sum: Vec<f64>,
    pub min_y: f64,
    /// `max_i ‖x_i − x̂_i‖` after triggering.
    pub max_x_gap: f64,
    /// `max_i |y_i − ŷ_i|` after triggering.
    pub max_y_gap: f64,
    pub max_grad_norm: f64,
}

/// Online metrics for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub t: usize,
    pub r_d: f64,
    pub r_c: f64,
    /// `Σ_i (f(z̃_i) − f*)`; `None` unless full metrics were requested.
    pub r_f: Option<f64>,
    /// `max_i (f(z̃_i) − f*)`.
    pub f_gap_max: Option<f64>,
    /// `max_i ‖ẑ_i − x*‖`.
    pub max_dist: f64,
}

/// Optimum and objective needed for online metrics.
#[derive(Clone)]
pub struct MetricsTarget {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// Evaluate `R_f` (costs `m²` local evaluations per round).
    pub cost: bool,
}

#[derive(Clone, Default)]
pub struct LogOptions {
    /// Keep agent states every `thin` rounds; 0 keeps only the endpoints.
    pub thin: usize,
    pub optimum: Option<MetricsTarget>,
}

pub struct TrajectoryLog {
    pub m: usize,
    pub d: usize,
    pub verdicts: [Verdict; 3],
    /// `rounds[k].t == k + 1`.
    pub rounds: Vec<RoundSummary>,
    /// Ascending in `t`; first entry is round 0, last is the final round.
    pub snapshots: Vec<AgentSnapshot>,
    /// `metrics[t]` for `t ∈ [0, T]` when an optimum was supplied.
    pub metrics: Vec<RoundMetrics>,
    /// `1ᵀx(0)`.
    pub initial_mass_x: Vec<f64>,
    pub x_trigger_counts: Vec<u64>,
    pub y_trigger_counts: Vec<u64>,
    /// First round with `R_d < eps`, under a termination rule.
    pub k_f: Option<usize>,
    /// A termination rule was set and the cap was reached first.
    pub capped: bool,
    /// `R_d` was 0/0 at round 0 and is reported as 0.
    pub degenerate_distance: bool,
}

impl TrajectoryLog {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn initial(&self) -> &AgentSnapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &AgentSnapshot {
        self.snapshots.last().expect("round 0 is always kept")
    }

    pub fn snapshot(&self, t: usize) -> Option<&AgentSnapshot> {
        self.snapshots
            .binary_search_by_key(&t, |s| s.t)
            .ok()
            .map(|k| &self.snapshots[k])
    }

    pub fn round(&self, t: usize) -> Option<&RoundSummary> {
        t.checked_sub(1).and_then(|k| self.rounds.get(k))
    }

    /// `N_x`: trigger events per agent, averaged over agents.
    pub fn mean_x_triggers(&self) -> f64 {
        self.x_trigger_counts.iter().sum::<u64>() as f64 / self.m as f64
    }

    pub fn mean_y_triggers(&self) -> f64 {
        self.y_trigger_counts.iter().sum::<u64>() as f64 / self.m as f64
    }

    pub fn messages(&self) -> (u64, u64) {
        self.rounds
            .iter()
            .fold((0, 0), |(a, b), r| (a + r.x_messages, b + r.y_messages))
    }

    /// `δ̂ = min_{i, t ≤ T} y_i(t)`, including `y(0) = 1`.
    pub fn min_weight(&self) -> f64 {
        self.rounds.iter().map(|r| r.min_y).fold(1.0, f64::min)
    }

    /// `1ᵀx(t)` for `t ∈ [0, T]`.
    pub fn mass_x(&self, t: usize) -> &[f64] {
        match t {
            0 => &self.initial_mass_x,
            _ => &self.rounds[t - 1].mass_x,
        }
    }

    /// `metrics.csv`: `t, R_d, R_f, R_c, Nx_cum, Ny_cum` for `t = 1..=T`.
    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record(["t", "R_d", "R_f", "R_c", "Nx_cum", "Ny_cum"])?;
        let (mut nx, mut ny) = (0usize, 0usize);
        for r in &self.rounds {
            nx += r.x_triggers;
            ny += r.y_triggers;
            let met = self.metrics.get(r.t);
            w.write_record([
                r.t.to_string(),
                opt(met.map(|m| m.r_d)),
                opt(met.and_then(|m| m.r_f)),
                opt(met.map(|m| m.r_c)),
                (nx as f64 / self.m as f64).to_string(),
                (ny as f64 / self.m as f64).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Per-agent trajectory rows for every kept snapshot:
    /// `t, agent, channel, triggered, y_i, norm_x_i, dist_zhat_agent1, R_d, R_f, R_c`.
    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record([
            "t",
            "agent",
            "channel",
            "triggered",
            "y_i",
            "norm_x_i",
            "dist_zhat_agent1",
            "R_d",
            "R_f",
            "R_c",
        ])?;
        let d = self.d;
        for s in &self.snapshots {
            let met = self.metrics.get(s.t);
            let z1 = s.z_hat_of(0);
            for i in 0..self.m {
                let xi = &s.x[i * d..(i + 1) * d];
                let norm_x = crate::objective::norm(xi);
                let dz: f64 = s
                    .z_hat_of(i)
                    .iter()
                    .zip(z1)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                for (channel, flags) in [("x", &s.x_triggered), ("y", &s.y_triggered)] {
                    let triggered = flags.get(i).map_or("", |&f| if f { "1" } else { "0" });
                    w.write_record([
                        s.t.to_string(),
                        (i + 1).to_string(),
                        channel.to_string(),
                        triggered.to_string(),
                        s.y[i].to_string(),
                        norm_x.to_string(),
                        dz.to_string(),
                        opt(met.map(|m| m.r_d)),
                        opt(met.and_then(|m| m.r_f)),
                        opt(met.map(|m| m.r_c)),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

/// Builds a [`TrajectoryLog`] while an engine runs.
pub struct Recorder {
    log: TrajectoryLog,
    opts: LogOptions,
    /// `Σ_i ‖ẑ_i(0) − x*‖`.
    distance_scale: f64,
}

impl Recorder {
    pub fn new(engine: &Engine, verdicts: [Verdict; 3], opts: LogOptions) -> Self {
        let (m, d) = (engine.agents(), engine.dim());
        let init = engine.snapshot();
        let mut initial_mass_x = vec![0.0; d];
        for i in 0..m {
            for c in 0..d {
                initial_mass_x[c] += init.x[i * d + c];
            }
        }
        let distance_scale = opts
            .optimum
            .as_ref()
            .map_or(0.0, |target| metrics::distance_sum(&init.z_hat, d, &target.x_star));
        let mut rec = Self {
            log: TrajectoryLog {
                m,
                d,
                verdicts,
                rounds: Vec::new(),
                snapshots: Vec::new(),
                metrics: Vec::new(),
                initial_mass_x,
                x_trigger_counts: vec![0; m],
                y_trigger_counts: vec![0; m],
                k_f: None,
                capped: false,
                degenerate_distance: distance_scale == 0.0,
            },
            opts,
            distance_scale,
        };
        rec.push_metrics(engine);
        rec.log.snapshots.push(init);
        rec
    }

    fn push_metrics(&mut self, engine: &Engine) {
        let Some(target) = &self.opts.optimum else {
            return;
        };
        let d = engine.dim();
        let z = engine.z_hat();
        let dist = metrics::distance_sum(z, d, &target.x_star);
        let r_d = if self.distance_scale > 0.0 { dist / self.distance_scale } else { 0.0 };
        let (r_f, f_gap_max) = if target.cost {
            let (sum, max) = metrics::cost_error(engine.objective().as_ref() as &dyn Objective, engine.z_tilde(), target.f_star);
            (Some(sum), Some(max))
        } else {
            (None, None)
        };
        self.log.metrics.push(RoundMetrics {
            t: engine.round(),
            r_d,
            r_c: metrics::consensus_error(z, d),
            r_f,
            f_gap_max,
            max_dist: metrics::max_distance(z, d, &target.x_star),
        });
    }

    pub fn record(&mut self, engine: &Engine, summary: RoundSummary) {
        self.log.rounds.push(summary);
        self.push_metrics(engine);
        let t = engine.round();
        if self.opts.thin > 0 && t % self.opts.thin == 0 {
            self.log.snapshots.push(engine.snapshot());
        }
    }

    pub fn last_relative_distance(&self) -> Option<f64> {
        self.log.metrics.last().map(|m| m.r_d)
    }

    pub fn finish(mut self, engine: &Engine, termination: Option<Termination>) -> TrajectoryLog {
        let t = engine.round();
        if self.log.snapshots.last().map(|s| s.t) != Some(t) {
            self.log.snapshots.push(engine.snapshot());
        }
        self.log.x_trigger_counts = engine.x_trigger_counts().to_vec();
        self.log.y_trigger_counts = engine.y_trigger_counts().to_vec();
        if let Some(term) = termination {
            match self.log.metrics.last() {
                Some(m) if m.r_d < term.eps => self.log.k_f = Some(t),
                _ => self.log.capped = true,
            }
        }
        self.log
    }
}
