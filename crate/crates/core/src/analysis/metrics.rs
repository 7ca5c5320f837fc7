//! Distance, cost and consensus metrics over agent states.

use crate::log::TrajectoryLog;
use crate::objective::{Objective, Optimum};

/// Termination level for `k_f`.
pub const TERMINATION_EPS: f64 = 1e-2;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// `Σ_i ‖z_i − x*‖` for row-major `z`.
pub fn distance_sum(z: &[f64], d: usize, x_star: &[f64]) -> f64 {
    z.chunks_exact(d).map(|zi| dist(zi, x_star)).sum()
}

/// `max_i ‖z_i − x*‖`.
pub fn max_distance(z: &[f64], d: usize, x_star: &[f64]) -> f64 {
    z.chunks_exact(d).map(|zi| dist(zi, x_star)).fold(0.0, f64::max)
}

/// `R_c = max_{i,j} ‖z_i − z_j‖`.
pub fn consensus_error(z: &[f64], d: usize) -> f64 {
    let rows: Vec<&[f64]> = z.chunks_exact(d).collect();
    let mut worst: f64 = 0.0;
    for (a, za) in rows.iter().enumerate() {
        for zb in &rows[a + 1..] {
            worst = worst.max(dist(za, zb));
        }
    }
    worst
}

/// `(Σ_i (f(z̃_i) − f*), max_i (f(z̃_i) − f*))` with `f` the global cost.
pub fn cost_error(obj: &dyn Objective, z_tilde: &[f64], f_star: f64) -> (f64, f64) {
    let d = obj.dim();
    z_tilde
        .chunks_exact(d)
        .map(|zi| obj.global_value(zi) - f_star)
        .fold((0.0, f64::NEG_INFINITY), |(s, m), g| (s + g, m.max(g)))
}

/// Metric series over the rounds a log kept full agent states for.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub t: Vec<usize>,
    pub r_d: Vec<f64>,
    pub r_f: Vec<f64>,
    pub r_c: Vec<f64>,
    pub n_x: f64,
    pub n_y: f64,
    /// First kept round with `R_d < 1e−2`; `None` stands for ∞.
    pub k_f: Option<usize>,
    /// `Σ_i ‖ẑ_i(0) − x*‖ = 0`; `R_d` is reported as 0.
    pub degenerate_distance: bool,
}

/// Evaluates `R_d`, `R_f`, `R_c` at every snapshot of `log`.
pub fn compute_metrics(log: &TrajectoryLog, obj: &dyn Objective, opt: &Optimum) -> Metrics {
    let d = log.d;
    let scale = distance_sum(&log.initial().z_hat, d, &opt.x);
    let degenerate = scale == 0.0;
    let mut out = Metrics {
        t: Vec::with_capacity(log.snapshots.len()),
        r_d: Vec::new(),
        r_f: Vec::new(),
        r_c: Vec::new(),
        n_x: log.mean_x_triggers(),
        n_y: log.mean_y_triggers(),
        k_f: None,
        degenerate_distance: degenerate,
    };
    for s in &log.snapshots {
        let r_d = if degenerate { 0.0 } else { distance_sum(&s.z_hat, d, &opt.x) / scale };
        if out.k_f.is_none() && r_d < TERMINATION_EPS {
            out.k_f = Some(s.t);
        }
        out.t.push(s.t);
        out.r_d.push(r_d);
        out.r_f.push(cost_error(obj, &s.z_tilde, opt.value).0);
        out.r_c.push(consensus_error(&s.z_hat, d));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_of_single_agent_is_zero() {
        assert_eq!(consensus_error(&[1.0, 2.0], 2), 0.0);
        assert_eq!(consensus_error(&[0.0, 0.0, 3.0, 4.0], 2), 5.0);
    }

    #[test]
    fn distances() {
        let z = [0.0, 0.0, 3.0, 4.0];
        assert_eq!(distance_sum(&z, 2, &[0.0, 0.0]), 5.0);
        assert_eq!(max_distance(&z, 2, &[0.0, 0.0]), 5.0);
    }
}
