//! Event-triggered gradient-push: synchronous rounds of mixing, push-sum
//! de-biasing, a local gradient step and two independent broadcast triggers.

use std::borrow::Cow;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{GraphSequence, MixingMatrix};
use crate::log::{AgentSnapshot, LogOptions, Recorder, RoundSummary, TrajectoryLog};
use crate::objective::{norm, Objective};
use crate::rng::{stream, Stream};
use crate::schedules::{Role, Schedule, Verdict};

/// Weights below this are rejected before dividing.
pub const MIN_WEIGHT: f64 = 1e-300;

/// Stepsize `α`, state threshold `τ` and weight threshold `ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSet {
    pub alpha: Schedule,
    pub tau: Schedule,
    pub zeta: Schedule,
}

impl ScheduleSet {
    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        self.tau.validate()?;
        self.zeta.validate()?;
        if self.alpha.is_zero() {
            return Err(Error::invalid("stepsize must be positive"));
        }
        Ok(())
    }

    /// Assumption verdicts for `(α, τ, ζ)`. Runs proceed regardless.
    pub fn verdicts(&self) -> [Verdict; 3] {
        [
            self.alpha.satisfies_assumption(Role::Stepsize),
            self.tau.satisfies_assumption(Role::XThreshold),
            self.zeta.satisfies_assumption(Role::YThreshold),
        ]
    }
}

/// `m × d` standard Gaussian initial states, row-major.
pub fn gaussian_initial_state(m: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::InitialState);
    (0..m * d).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One engine instance; `step` advances every agent by one round.
pub struct Engine {
    graph: GraphSequence,
    objective: Arc<dyn Objective>,
    schedules: ScheduleSet,
    clip: Option<f64>,
    m: usize,
    d: usize,
    t: usize,
    x: Vec<f64>,
    x_hat: Vec<f64>,
    y: Vec<f64>,
    y_hat: Vec<f64>,
    w_hat: Vec<f64>,
    z_hat: Vec<f64>,
    z_tilde: Vec<f64>,
    grad: Vec<f64>,
    mixed_x: Vec<f64>,
    x_triggered: Vec<bool>,
    y_triggered: Vec<bool>,
    e_norm: Vec<f64>,
    row_sum: Vec<f64>,
    nx: Vec<u64>,
    ny: Vec<u64>,
    /// `H(t − 1)`.
    h_prev: f64,
    /// `S(t)`.
    s: f64,
    lookahead: Option<MixingMatrix>,
}

impl Engine {
    /// Round-0 state: `y = ŷ = 1`, `x̂ = x`, `ẑ = z̃ = x`.
    pub fn new(
        graph: GraphSequence,
        objective: Arc<dyn Objective>,
        schedules: ScheduleSet,
        x0: Vec<f64>,
    ) -> Result<Self> {
        schedules.validate()?;
        let m = graph.node_count();
        let d = objective.dim();
        if objective.agents() != m {
            return Err(Error::invalid(format!(
                "objective has {} agents but the graph has {m} nodes",
                objective.agents()
            )));
        }
        if x0.len() != m * d {
            return Err(Error::invalid(format!("initial state needs {} entries, got {}", m * d, x0.len())));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        Ok(Self {
            graph,
            objective,
            schedules,
            clip: None,
            m,
            d,
            t: 0,
            x_hat: x0.clone(),
            w_hat: x0.clone(),
            z_hat: x0.clone(),
            z_tilde: x0.clone(),
            x: x0,
            y: vec![1.0; m],
            y_hat: vec![1.0; m],
            grad: vec![0.0; m * d],
            mixed_x: vec![0.0; m * d],
            x_triggered: vec![false; m],
            y_triggered: vec![false; m],
            e_norm: vec![0.0; m],
            row_sum: vec![0.0; m],
            nx: vec![0; m],
            ny: vec![0; m],
            h_prev: 1.0,
            s: 0.0,
            lookahead: None,
        })
    }

    /// Overrides `z̃(0)`; it is fully replaced at round 1.
    pub fn with_z_tilde(mut self, z0: Vec<f64>) -> Result<Self> {
        if z0.len() != self.m * self.d {
            return Err(Error::invalid("z̃(0) has the wrong size"));
        }
        self.z_tilde = z0;
        Ok(self)
    }

    /// Scales every gradient down to norm at most `bound`.
    pub fn with_gradient_clip(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::invalid("gradient clip must be positive"));
        }
        self.clip = Some(bound);
        Ok(self)
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn schedules(&self) -> &ScheduleSet {
        &self.schedules
    }

    pub fn graph(&self) -> &GraphSequence {
        &self.graph
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_hat(&self) -> &[f64] {
        &self.x_hat
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_hat(&self) -> &[f64] {
        &self.y_hat
    }

    pub fn z_hat(&self) -> &[f64] {
        &self.z_hat
    }

    pub fn z_tilde(&self) -> &[f64] {
        &self.z_tilde
    }

    /// Trigger totals per agent, initialization excluded.
    pub fn x_trigger_counts(&self) -> &[u64] {
        &self.nx
    }

    pub fn y_trigger_counts(&self) -> &[u64] {
        &self.ny
    }

    /// `(H(t − 1), S(t))` at the current round `t`.
    pub fn averaging_state(&self) -> (f64, f64) {
        (self.h_prev, self.s)
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        let round_data = self.t > 0;
        let pick = |v: &Vec<f64>| if round_data { v.clone() } else { Vec::new() };
        AgentSnapshot {
            t: self.t,
            x: self.x.clone(),
            x_hat: self.x_hat.clone(),
            y: self.y.clone(),
            y_hat: self.y_hat.clone(),
            z_hat: self.z_hat.clone(),
            z_tilde: self.z_tilde.clone(),
            x_triggered: if round_data { self.x_triggered.clone() } else { Vec::new() },
            y_triggered: if round_data { self.y_triggered.clone() } else { Vec::new() },
            e_norm: pick(&self.e_norm),
            row_sum: pick(&self.row_sum),
        }
    }

    /// Advances from round `t` to `t + 1`.
    pub fn step(&mut self) -> Result<RoundSummary> {
        let (m, d, t) = (self.m, self.d, self.t);
        let current: Cow<'_, MixingMatrix> = match self.lookahead.take() {
            Some(mm) => Cow::Owned(mm),
            None => self.graph.mixing(t),
        };

        // ŵ(t+1) = A(t) x̂(t), y(t+1) = A(t) ŷ(t); also A(t) x(t) for e(t+1).
        current.apply_rows(&self.x_hat, d, &mut self.w_hat);
        current.apply_rows(&self.x, d, &mut self.mixed_x);
        let mut y_next = vec![0.0; m];
        current.apply_vec(&self.y_hat, &mut y_next);
        for i in 0..m {
            let yi = y_next[i];
            if !(yi >= MIN_WEIGHT) {
                return Err(Error::NonPositiveWeight {
                    agent: i,
                    round: t + 1,
                    value: yi,
                });
            }
            self.row_sum[i] = current.row_sum(i);
        }
        self.y = y_next;

        let alpha = self.schedules.alpha.value(t + 1);
        let tau = self.schedules.tau.value(t + 1);
        let zeta = self.schedules.zeta.value(t + 1);

        // 1ᵀθ_x(t) before x(t) is overwritten.
        let mut theta_x_prev = vec![0.0; d];
        for i in 0..m {
            for c in 0..d {
                theta_x_prev[c] += self.x_hat[i * d + c] - self.x[i * d + c];
            }
        }

        let mut grad_sum = vec![0.0; d];
        let mut max_grad_norm: f64 = 0.0;
        for i in 0..m {
            let row = i * d..(i + 1) * d;
            let inv = 1.0 / self.y[i];
            for k in row.clone() {
                self.z_hat[k] = self.w_hat[k] * inv;
            }
            let g = &mut self.grad[row.clone()];
            self.objective.gradient(i, &self.z_hat[row.clone()], g);
            let mut gn = norm(g);
            if let Some(bound) = self.clip {
                if gn > bound {
                    let scale = bound / gn;
                    g.iter_mut().for_each(|v| *v *= scale);
                    gn = bound;
                }
            }
            max_grad_norm = max_grad_norm.max(gn);
            let mut e2 = 0.0;
            for (c, k) in row.enumerate() {
                let e = self.w_hat[k] - self.mixed_x[k];
                e2 += e * e;
                grad_sum[c] += self.grad[k];
                self.x[k] = self.w_hat[k] - alpha * self.grad[k];
            }
            self.e_norm[i] = e2.sqrt();
        }

        // Broadcast decisions; ties fire.
        let next: Cow<'_, MixingMatrix> = self.graph.mixing(t + 1);
        let (mut x_triggers, mut y_triggers, mut x_messages, mut y_messages) = (0, 0, 0u64, 0u64);
        for i in 0..m {
            let row = i * d..(i + 1) * d;
            let gap = dist(&self.x[row.clone()], &self.x_hat[row.clone()]);
            let fanout = (next.out_degree(i) - 1) as u64;
            self.x_triggered[i] = gap >= tau;
            if self.x_triggered[i] {
                self.x_hat[row.clone()].copy_from_slice(&self.x[row]);
                self.nx[i] += 1;
                x_triggers += 1;
                x_messages += fanout;
            }
            self.y_triggered[i] = (self.y[i] - self.y_hat[i]).abs() >= zeta;
            if self.y_triggered[i] {
                self.y_hat[i] = self.y[i];
                self.ny[i] += 1;
                y_triggers += 1;
                y_messages += fanout;
            }
        }
        if let Cow::Owned(mm) = next {
            self.lookahead = Some(mm);
        }

        // z̃(t+1) = (α(t+1)/H(t) ẑ(t+1) + S(t) z̃(t)) / S(t+1).
        let h = self.h_prev * (1.0 + self.schedules.tau.value(t));
        let weight = alpha / h;
        let s_next = self.s + weight;
        for k in 0..m * d {
            self.z_tilde[k] = (weight * self.z_hat[k] + self.s * self.z_tilde[k]) / s_next;
        }
        self.h_prev = h;
        self.s = s_next;
        self.t = t + 1;

        let mut mass_x = vec![0.0; d];
        let mut theta_x = vec![0.0; d];
        let (mut max_x_gap, mut max_y_gap): (f64, f64) = (0.0, 0.0);
        for i in 0..m {
            let row = i * d..(i + 1) * d;
            for (c, k) in row.clone().enumerate() {
                mass_x[c] += self.x[k];
                theta_x[c] += self.x_hat[k] - self.x[k];
            }
            max_x_gap = max_x_gap.max(dist(&self.x[row.clone()], &self.x_hat[row]));
            max_y_gap = max_y_gap.max((self.y[i] - self.y_hat[i]).abs());
        }
        let theta: f64 = self.y_hat.iter().zip(&self.y).map(|(h, y)| h - y).sum();
        Ok(RoundSummary {
            t: self.t,
            alpha,
            tau,
            zeta,
            x_triggers,
            y_triggers,
            x_messages,
            y_messages,
            mass_x,
            mass_y: self.y.iter().sum(),
            theta,
            theta_x,
            theta_x_prev,
            grad_sum,
            min_y: self.y.iter().copied().fold(f64::INFINITY, f64::min),
            max_x_gap,
            max_y_gap,
            max_grad_norm,
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    /// Stop at the first `k` with `R_d(k) < eps`.
    pub eps: f64,
    /// Hard cap on rounds.
    pub cap: usize,
}

impl Default for Termination {
    fn default() -> Self {
        Self { eps: 1e-2, cap: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Gaussian { seed: u64 },
    Given(Vec<f64>),
}

/// Everything one simulation needs.
#[derive(Clone)]
pub struct SimConfig {
    pub graph: GraphSequence,
    pub objective: Arc<dyn Objective>,
    pub schedules: ScheduleSet,
    pub initial: InitialState,
    pub z_tilde0: Option<Vec<f64>>,
    pub clip: Option<f64>,
    /// Rounds to run when no termination rule is set.
    pub horizon: usize,
    pub termination: Option<Termination>,
    pub log: LogOptions,
}

impl SimConfig {
    pub fn build_engine(&self) -> Result<Engine> {
        let m = self.graph.node_count();
        let d = self.objective.dim();
        let x0 = match &self.initial {
            InitialState::Gaussian { seed } => gaussian_initial_state(m, d, *seed),
            InitialState::Given(v) => v.clone(),
        };
        let mut engine = Engine::new(self.graph.clone(), Arc::clone(&self.objective), self.schedules, x0)?;
        if let Some(z0) = &self.z_tilde0 {
            engine = engine.with_z_tilde(z0.clone())?;
        }
        if let Some(bound) = self.clip {
            engine = engine.with_gradient_clip(bound)?;
        }
        Ok(engine)
    }
}

/// Runs to the horizon, or until `R_d < eps` when a termination rule is set.
pub fn run(cfg: &SimConfig) -> Result<TrajectoryLog> {
    let mut engine = cfg.build_engine()?;
    if cfg.termination.is_some() && cfg.log.optimum.is_none() {
        return Err(Error::invalid("termination on R_d needs the optimum"));
    }
    let mut rec = Recorder::new(&engine, cfg.schedules.verdicts(), cfg.log.clone());
    match cfg.termination {
        None => {
            for _ in 0..cfg.horizon {
                let summary = engine.step()?;
                rec.record(&engine, summary);
            }
        }
        Some(term) => {
            while engine.round() < term.cap {
                let summary = engine.step()?;
                rec.record(&engine, summary);
                if rec.last_relative_distance().is_some_and(|r| r < term.eps) {
                    break;
                }
            }
        }
    }
    Ok(rec.finish(&engine, cfg.termination))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{k_out_neighbors_graph, DirectedGraphSnapshot, GraphKind};
    use crate::objective::LeastSquaresInstance;

    fn single_agent(x0: f64) -> Engine {
        let obj = LeastSquaresInstance::from_parts(1, 1, vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let g = GraphSequence::new(GraphKind::Static(DirectedGraphSnapshot::empty(1).unwrap()), 0).unwrap();
        let sched = ScheduleSet {
            alpha: Schedule::power(0.1, 0.5),
            tau: Schedule::Zero,
            zeta: Schedule::Zero,
        };
        Engine::new(g, Arc::new(obj), sched, vec![x0]).unwrap()
    }

    #[test]
    fn single_agent_is_gradient_descent() {
        let mut e = single_agent(0.0);
        let mut x = 0.0f64;
        for t in 0..50 {
            e.step().unwrap();
            x -= 0.1 / ((t + 1) as f64).sqrt() * 2.0 * (x - 2.0);
            assert_eq!(e.y()[0], 1.0);
            assert!((e.x()[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_thresholds_fire_every_round() {
        let g = k_out_neighbors_graph(6, 2, 1).unwrap();
        let obj = crate::objective::generate_least_squares(6, 2, 1, 0.1, 0).unwrap();
        let sched = ScheduleSet {
            alpha: Schedule::power(1.0, 0.52),
            tau: Schedule::Zero,
            zeta: Schedule::Zero,
        };
        let mut e = Engine::new(g, Arc::new(obj), sched, gaussian_initial_state(6, 2, 0)).unwrap();
        for _ in 0..20 {
            let s = e.step().unwrap();
            assert_eq!(s.x_triggers, 6);
            assert_eq!(s.y_triggers, 6);
            assert_eq!(s.x_messages, 12);
            assert_eq!(e.x(), e.x_hat());
            assert_eq!(e.y(), e.y_hat());
        }
        assert!(e.x_trigger_counts().iter().all(|&n| n == 20));
    }

    #[test]
    fn first_average_equals_first_estimate() {
        let mut e = single_agent(1.0).with_z_tilde(vec![123.0]).unwrap();
        e.step().unwrap();
        assert_eq!(e.z_tilde(), e.z_hat());
    }

    #[test]
    fn rejects_mismatched_sizes() {
        let g = k_out_neighbors_graph(4, 1, 0).unwrap();
        let obj = crate::objective::generate_least_squares(5, 2, 1, 0.1, 0).unwrap();
        let sched = ScheduleSet {
            alpha: Schedule::inverse_sqrt(),
            tau: Schedule::Zero,
            zeta: Schedule::Zero,
        };
        assert!(Engine::new(g, Arc::new(obj), sched, vec![0.0; 8]).is_err());
    }
}
