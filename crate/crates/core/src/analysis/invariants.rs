//! Per-round invariants of a trajectory log.

use crate::log::TrajectoryLog;

/// Largest relative residual of the two mass identities over all rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassResiduals {
    /// `1ᵀx(t+1) − 1ᵀx(t) − 1ᵀθ_x(t) + α(t+1) Σ_i ∇f_i(ẑ_i(t+1))`.
    pub x: f64,
    /// `1ᵀy(t+1) − 1ᵀy(t) − 1ᵀθ(t)`.
    pub y: f64,
}

/// Residuals are divided by `max(1, Σ |terms|)` per coordinate.
pub fn mass_residuals(log: &TrajectoryLog) -> MassResiduals {
    let mut out = MassResiduals { x: 0.0, y: 0.0 };
    let (mut prev_mass_y, mut prev_theta) = (log.m as f64, 0.0);
    for r in &log.rounds {
        let prev_mass_x = log.mass_x(r.t - 1);
        for c in 0..log.d {
            let step = r.alpha * r.grad_sum[c];
            let lhs = r.mass_x[c];
            let rhs = prev_mass_x[c] + r.theta_x_prev[c] - step;
            let scale = 1f64.max(prev_mass_x[c].abs() + r.theta_x_prev[c].abs() + step.abs());
            out.x = out.x.max((lhs - rhs).abs() / scale);
        }
        let rhs = prev_mass_y + prev_theta;
        out.y = out.y.max((r.mass_y - rhs).abs() / 1f64.max(prev_mass_y.abs() + prev_theta.abs()));
        prev_mass_y = r.mass_y;
        prev_theta = r.theta;
    }
    out
}

/// Rounds where a post-trigger gap reaches its threshold without being zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriggerHold {
    pub x_violations: Vec<usize>,
    pub y_violations: Vec<usize>,
}

pub fn trigger_hold(log: &TrajectoryLog) -> TriggerHold {
    let mut out = TriggerHold::default();
    for r in &log.rounds {
        if !(r.max_x_gap < r.tau || r.max_x_gap == 0.0) {
            out.x_violations.push(r.t);
        }
        if !(r.max_y_gap < r.zeta || r.max_y_gap == 0.0) {
            out.y_violations.push(r.t);
        }
    }
    out
}

/// `‖e_i(t+1)‖ ≤ d_i(t) τ(t)` on every kept snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorBound {
    pub checked: usize,
    /// `(t + 1, agent)` pairs that exceed the bound.
    pub violations: Vec<(usize, usize)>,
    /// `max_t Σ_i ‖e_i(t+1)‖ / (m τ(t))` over rounds with `τ(t) > 0`.
    pub worst_sum_ratio: f64,
}

pub fn error_bound(log: &TrajectoryLog, tau: &crate::schedules::Schedule) -> ErrorBound {
    let mut out = ErrorBound::default();
    for s in log.snapshots.iter().filter(|s| s.t >= 1) {
        let thr = tau.value(s.t - 1);
        let mut total = 0.0;
        for (i, (&e, &d)) in s.e_norm.iter().zip(&s.row_sum).enumerate() {
            out.checked += 1;
            total += e;
            if e > d * thr {
                out.violations.push((s.t, i));
            }
        }
        if thr > 0.0 {
            out.worst_sum_ratio = out.worst_sum_ratio.max(total / (log.m as f64 * thr));
        }
    }
    out
}
