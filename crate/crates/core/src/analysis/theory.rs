//! Theoretical constants and bounds evaluated against a trajectory log.
//!
//! Contraction constants `(C₀, λ)` are empirical fits and `δ` is the observed
//! minimum weight, so every assembled bound here is an empirical-constant
//! bound rather than a certificate.

use std::fmt::Write as _;

use crate::engine::ScheduleSet;
use crate::error::{Error, Result};
use crate::graph::PhiEstimate;
use crate::log::TrajectoryLog;
use crate::objective::{estimate_gradient_bound, GradientBound, Objective};
use crate::schedules::{Schedule, Total};

/// Enclosure of `m_ζ = m + Σ_s 1ᵀθ(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MZeta {
    pub m: usize,
    /// `m + Σ_{s ≤ T} 1ᵀθ(s)`.
    pub center: f64,
    /// `m (F_ζ − F_ζ(T))`; infinite when `Σζ` diverges.
    pub half_width: f64,
}

impl MZeta {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    /// `B_ζ = m_ζ / m` at the center.
    pub fn b_zeta(&self) -> f64 {
        self.center / self.m as f64
    }

    pub fn b_zeta_range(&self) -> (f64, f64) {
        (self.lo() / self.m as f64, self.hi() / self.m as f64)
    }
}

pub fn compute_m_zeta(log: &TrajectoryLog, zeta: &Schedule, horizon: usize) -> MZeta {
    let horizon = horizon.min(log.horizon());
    let m = log.m;
    let center = m as f64 + log.rounds[..horizon].iter().map(|r| r.theta).sum::<f64>();
    let half_width = match zeta.total_sum() {
        Total::Finite(total) => {
            let head = zeta.cumulative(horizon)[horizon];
            m as f64 * (total.hi - head).max(0.0)
        }
        Total::Divergent => f64::INFINITY,
    };
    MZeta { m, center, half_width }
}

/// `β(t)` and `t^{3/2} β(t)` for `t ∈ [0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEnvelope {
    pub beta: Vec<f64>,
    pub weighted: Vec<f64>,
}

/// `β(t) = m((F_ζ − F_ζ(t)) + C₀λᵗ + C₀λ^{t/2} F_ζ(t) + ζ(⌊t/2⌋ + 1)/(1 − λ))`.
pub fn beta_envelope(horizon: usize, m: usize, c0: f64, lambda: f64, zeta: &Schedule) -> Result<BetaEnvelope> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("λ must lie in (0, 1), got {lambda}")));
    }
    let total = zeta
        .total_sum()
        .finite()
        .ok_or_else(|| Error::Divergent(format!("Σζ for ζ = {zeta}")))?
        .hi;
    let head = zeta.cumulative(horizon);
    let mf = m as f64;
    let mut beta = Vec::with_capacity(horizon + 1);
    let mut weighted = Vec::with_capacity(horizon + 1);
    for (t, &f_t) in head.iter().enumerate() {
        let tf = t as f64;
        let b = mf
            * ((total - f_t).max(0.0)
                + c0 * lambda.powf(tf)
                + c0 * lambda.powf(tf / 2.0) * f_t
                + zeta.value(t / 2 + 1) / (1.0 - lambda));
        beta.push(b);
        weighted.push(tf.powf(1.5) * b);
    }
    Ok(BetaEnvelope { beta, weighted })
}

/// `‖y(t+1) − m_ζ φ̂(t)‖_∞` against `β(t)` plus the φ-estimation slack.
#[derive(Debug, Clone, PartialEq)]
pub struct YConsensus {
    pub t: Vec<usize>,
    pub deviation: Vec<f64>,
    pub allowed: Vec<f64>,
    /// Reference-product gap used for the slack at each `t`.
    pub gap: Vec<usize>,
    /// Rounds with `deviation > allowed`.
    pub violations: Vec<usize>,
}

pub fn y_consensus_check(
    log: &TrajectoryLog,
    est: &PhiEstimate,
    m_zeta: &MZeta,
    beta: &BetaEnvelope,
) -> YConsensus {
    let mut out = YConsensus {
        t: Vec::new(),
        deviation: Vec::new(),
        allowed: Vec::new(),
        gap: Vec::new(),
        violations: Vec::new(),
    };
    for snap in log.snapshots.iter().filter(|s| s.t >= 1) {
        let t = snap.t - 1;
        if t > est.horizon() || t >= beta.beta.len() {
            break;
        }
        let phi = est.phi(t);
        let dev = snap
            .y
            .iter()
            .zip(phi)
            .map(|(y, p)| (y - m_zeta.center * p).abs())
            .fold(0.0, f64::max);
        let phi_max = phi.iter().copied().fold(0.0, f64::max);
        let allowed = beta.beta[t] + est.slack(t, m_zeta.hi()) + m_zeta.half_width * phi_max;
        if dev > allowed {
            out.violations.push(t);
        }
        out.t.push(t);
        out.deviation.push(dev);
        out.allowed.push(allowed);
        out.gap.push(est.reference_gap(t));
    }
    out
}

/// Constants shared by the consensus and rate bounds.
#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub m: usize,
    pub horizon: usize,
    pub m_zeta: MZeta,
    /// Observed `min y` (empirical `δ`).
    pub delta: f64,
    /// Gradient bound `D` on the region visited.
    pub d_bound: f64,
    pub c0: f64,
    pub lambda: f64,
    pub q: f64,
    /// `‖x(0)‖₁`, summed over all agents and coordinates.
    pub x0_l1: f64,
    pub beta: BetaEnvelope,
}

impl TheoryReport {
    pub fn new(log: &TrajectoryLog, est: &PhiEstimate, zeta: &Schedule, d_bound: f64) -> Result<Self> {
        let horizon = log.horizon();
        let m_zeta = compute_m_zeta(log, zeta, horizon);
        let beta = beta_envelope(horizon, log.m, est.c0, est.lambda, zeta)?;
        Ok(Self {
            m: log.m,
            horizon,
            m_zeta,
            delta: log.min_weight(),
            d_bound,
            c0: est.c0,
            lambda: est.lambda,
            q: est.q,
            x0_l1: log.initial().x.iter().map(|v| v.abs()).sum(),
            beta,
        })
    }

    /// `K(t) = β(t)/m_ζ`, using the low end of the `m_ζ` enclosure.
    pub fn k(&self, t: usize) -> f64 {
        self.beta.beta[t] / self.m_zeta.lo()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let (blo, bhi) = self.m_zeta.b_zeta_range();
        let _ = writeln!(s, "m_zeta        {} ± {:e}", self.m_zeta.center, self.m_zeta.half_width);
        let _ = writeln!(s, "B_zeta        [{blo}, {bhi}]");
        let _ = writeln!(s, "delta (obs)   {}", self.delta);
        let _ = writeln!(s, "D (region)    {}", self.d_bound);
        let _ = writeln!(s, "C0, lambda    {}, {}", self.c0, self.lambda);
        let _ = writeln!(s, "Q             {}", self.q);
        let _ = writeln!(s, "||x(0)||_1    {}", self.x0_l1);
        s
    }
}

/// `D` estimated on the ball around `x*` that holds every logged `ẑ_i(t)`.
#[derive(Debug, Clone)]
pub struct RegionBound {
    pub bound: GradientBound,
    /// Largest gradient norm the engine actually applied.
    pub observed_max: f64,
    /// `observed_max ≤ bound.max`.
    pub contained: bool,
}

impl RegionBound {
    /// `max(D̂, observed)`.
    pub fn effective(&self) -> f64 {
        self.bound.max.max(self.observed_max)
    }
}

/// Radius margin over the farthest logged estimate.
const REGION_MARGIN: f64 = 1.05;

pub fn trajectory_gradient_bound(
    log: &TrajectoryLog,
    obj: &dyn Objective,
    x_star: &[f64],
    samples: usize,
    seed: u64,
) -> Result<RegionBound> {
    let d = log.d;
    let from_metrics = log.metrics.iter().map(|m| m.max_dist).fold(0.0, f64::max);
    let from_snaps = log
        .snapshots
        .iter()
        .map(|s| super::metrics::max_distance(&s.z_hat, d, x_star))
        .fold(0.0, f64::max);
    let far = from_metrics.max(from_snaps);
    let radius = if far > 0.0 { REGION_MARGIN * far } else { 1.0 };
    let bound = estimate_gradient_bound(obj, x_star, radius, samples, seed)?;
    let observed_max = log.rounds.iter().map(|r| r.max_grad_norm).fold(0.0, f64::max);
    Ok(RegionBound {
        contained: observed_max <= bound.max,
        bound,
        observed_max,
    })
}

/// The per-agent consensus bound for every `t ∈ [0, T]`.
#[derive(Debug, Clone)]
pub struct DisagreementBound {
    /// Everything except the `d_i(t)τ(t)/δ` term.
    base: Vec<f64>,
    tau: Vec<f64>,
    delta: f64,
}

impl DisagreementBound {
    /// `t = 0`: `2C₀‖x(0)‖₁/δ`. `t ≥ 1`:
    /// `(1/δ)[(C₀λᵗ + K(t))‖x(0)‖₁ + m Σ_{s<t}(C₀λ^{t−s−1} + K(t))(α(s+1)D + τ(s))] + d_i(t)τ(t)/δ`.
    pub fn new(report: &TheoryReport, schedules: &ScheduleSet) -> Self {
        let horizon = report.horizon;
        let (c0, lambda, delta) = (report.c0, report.lambda, report.delta);
        let mf = report.m as f64;
        let mut base = Vec::with_capacity(horizon + 1);
        let mut tau = Vec::with_capacity(horizon + 1);
        base.push(2.0 * c0 * report.x0_l1 / delta);
        tau.push(0.0);
        // g = Σ_{s<t} λ^{t−s−1} u(s), u_sum = Σ_{s<t} u(s).
        let (mut g, mut u_sum) = (0.0, 0.0);
        for t in 1..=horizon {
            let u = schedules.alpha.value(t) * report.d_bound + schedules.tau.value(t - 1);
            g = lambda * g + u;
            u_sum += u;
            let k = report.k(t);
            let lam_t = lambda.powi(t as i32);
            base.push(((c0 * lam_t + k) * report.x0_l1 + mf * (c0 * g + k * u_sum)) / delta);
            tau.push(schedules.tau.value(t));
        }
        Self { base, tau, delta }
    }

    pub fn horizon(&self) -> usize {
        self.base.len() - 1
    }

    /// Bound on `‖ẑ_i(t+1) − B_ζ x̄(t)‖` for an agent with `d_i(t) = row_sum`.
    pub fn value(&self, t: usize, row_sum: f64) -> f64 {
        self.base[t] + row_sum * self.tau[t] / self.delta
    }
}

/// Summed consensus error against the closed-form bound and the summed bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryCheck {
    /// `max_i Σ_{t=0}^{T} α(t+1) ‖ẑ_i(t+1) − B_ζ x̄(t)‖`.
    pub weighted_measured: f64,
    /// `min_i Σ_{t=0}^{T} α(t+1) · bound_i(t)`.
    pub summed_bound: f64,
    /// Closed-form right-hand side.
    pub closed_form: f64,
    /// The closed form holds for `α = 1/√t` only.
    pub alpha_matches: bool,
}

/// Consensus error `‖ẑ_i(t+1) − 1ᵀx(t)/m_ζ‖` against [`DisagreementBound`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusCheck {
    pub t: Vec<usize>,
    /// `max_i` measured error.
    pub measured: Vec<f64>,
    /// `min_i` bound.
    pub bound: Vec<f64>,
    /// `(t, agent)` pairs where the measured error exceeds that agent's bound.
    pub violations: Vec<(usize, usize)>,
    /// Present when every `t ∈ [0, T−1]` was checked.
    pub corollary: Option<CorollaryCheck>,
}

pub fn consensus_check(log: &TrajectoryLog, report: &TheoryReport, schedules: &ScheduleSet) -> ConsensusCheck {
    let bound = DisagreementBound::new(report, schedules);
    let m = log.m;
    let targets = [report.m_zeta.lo(), report.m_zeta.center, report.m_zeta.hi()];
    let mut out = ConsensusCheck {
        t: Vec::new(),
        measured: Vec::new(),
        bound: Vec::new(),
        violations: Vec::new(),
        corollary: None,
    };
    let mut weighted_measured = vec![0.0; m];
    let mut weighted_bound = vec![0.0; m];
    for snap in log.snapshots.iter().filter(|s| s.t >= 1) {
        let t = snap.t - 1;
        if t > bound.horizon() {
            break;
        }
        let mass = log.mass_x(t);
        let alpha = schedules.alpha.value(t + 1);
        let (mut worst, mut tightest) = (0.0f64, f64::INFINITY);
        for i in 0..m {
            let zi = snap.z_hat_of(i);
            let err = targets
                .iter()
                .filter(|mz| mz.is_finite() && **mz > 0.0)
                .map(|mz| {
                    zi.iter()
                        .zip(mass)
                        .map(|(z, s)| (z - s / mz) * (z - s / mz))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            let b = bound.value(t, snap.row_sum[i]);
            if !(err <= b) {
                out.violations.push((t, i));
            }
            worst = worst.max(err);
            tightest = tightest.min(b);
            weighted_measured[i] += alpha * err;
            weighted_bound[i] += alpha * b;
        }
        out.t.push(t);
        out.measured.push(worst);
        out.bound.push(tightest);
    }
    let complete = out.t.len() == log.horizon() && out.t.iter().enumerate().all(|(k, &t)| k == t);
    if complete && log.horizon() >= 2 {
        let horizon = log.horizon() - 1;
        out.corollary = Some(CorollaryCheck {
            weighted_measured: weighted_measured.iter().copied().fold(0.0, f64::max),
            summed_bound: weighted_bound.iter().copied().fold(f64::INFINITY, f64::min),
            closed_form: corollary_rhs(report, schedules, horizon),
            alpha_matches: schedules.alpha.is_inverse_sqrt(),
        });
    }
    out
}

/// `Σ_{t=0}^{T} τ(t)` and `Σ_{t=0}^{T} τ(t)²` with `τ(0) = τ(1)`.
fn tau_sums(tau: &Schedule, horizon: usize) -> (f64, f64) {
    (0..=horizon).fold((0.0, 0.0), |(a, b), t| {
        let v = tau.value(t);
        (a + v, b + v * v)
    })
}

/// `Σ_{t=0}^{T} K(t) α(t+1) [‖x(0)‖₁ + Σ_{s<t}(α(s+1)D + τ(s))]`.
fn k_weighted_sum(report: &TheoryReport, schedules: &ScheduleSet, horizon: usize) -> f64 {
    let mut acc = 0.0;
    let mut u_sum = 0.0;
    for t in 0..=horizon {
        acc += report.k(t) * schedules.alpha.value(t + 1) * (report.x0_l1 + u_sum);
        u_sum += schedules.alpha.value(t + 1) * report.d_bound + schedules.tau.value(t);
    }
    acc
}

fn corollary_rhs(report: &TheoryReport, schedules: &ScheduleSet, horizon: usize) -> f64 {
    let (c0, lambda, delta) = (report.c0, report.lambda, report.delta);
    let mf = report.m as f64;
    let (e_tau_t, _) = tau_sums(&schedules.tau, horizon);
    let gap = delta * (1.0 - lambda);
    c0 * report.x0_l1 / gap
        + 4.0 * mf * c0 * e_tau_t / gap
        + c0 * mf * report.d_bound * (1.0 + (horizon.max(1) as f64).ln()) / gap
        + k_weighted_sum(report, schedules, horizon) / delta
}

/// The assembled rate bound at horizon `T` and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBound {
    pub horizon: usize,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    /// `E_τ = Σ_{t≥0} τ(t)` (upper end of its enclosure).
    pub e_tau: f64,
    pub value: f64,
}

/// `m e^{E_τ}/(2√(T+1)) J₁ + 3mD e^{E_τ}/(δ√(T+1)) (J₂ + J₃)` for `α = 1/√t`.
///
/// `J₁ = ‖x̄(0) − x*‖²/B_ζ + [2D²(1 + ln(T+1)) + 2E_{τ,2}(T) + E_τ(T)] B_ζ`,
/// `J₂ = C₀‖x(0)‖₁/(1−λ) + 4mC₀E_τ(T)/(1−λ) + C₀mD(1 + ln T)/(1−λ)`,
/// `J₃ = Σ_{t=0}^{T} K(t) α(t+1) [‖x(0)‖₁ + Σ_{s<t}(α(s+1)D + τ(s))]`.
/// `B_ζ` takes whichever end of its enclosure enlarges each term.
pub fn rate_bound(
    log: &TrajectoryLog,
    report: &TheoryReport,
    schedules: &ScheduleSet,
    x_star: &[f64],
    horizon: usize,
) -> Result<RateBound> {
    if !schedules.alpha.is_inverse_sqrt() {
        return Err(Error::invalid(format!(
            "the rate bound holds for α = 1/√t only (got {})",
            schedules.alpha
        )));
    }
    if horizon == 0 || horizon > report.horizon {
        return Err(Error::invalid(format!(
            "rate bound horizon must lie in [1, {}] (got {horizon})",
            report.horizon
        )));
    }
    let tail = schedules
        .tau
        .total_sum()
        .finite()
        .ok_or_else(|| Error::Divergent(format!("Στ for τ = {}", schedules.tau)))?;
    let e_tau = schedules.tau.value(0) + tail.hi;
    let (e_tau_t, e_tau2_t) = tau_sums(&schedules.tau, horizon);
    let (b_lo, b_hi) = report.m_zeta.b_zeta_range();
    let mf = report.m as f64;
    let (c0, lambda, delta, dd) = (report.c0, report.lambda, report.delta, report.d_bound);
    let tf = horizon as f64;

    let x_bar0: Vec<f64> = log.initial_mass_x.iter().map(|s| s / mf).collect();
    let dist2: f64 = x_bar0.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();

    let j1 = dist2 / b_lo + (2.0 * dd * dd * (1.0 + (tf + 1.0).ln()) + 2.0 * e_tau2_t + e_tau_t) * b_hi;
    let j2 = (c0 * report.x0_l1 + 4.0 * mf * c0 * e_tau_t + c0 * mf * dd * (1.0 + tf.ln())) / (1.0 - lambda);
    let j3 = k_weighted_sum(report, schedules, horizon);
    let growth = e_tau.exp();
    let root = (tf + 1.0).sqrt();
    let value = mf * growth / (2.0 * root) * j1 + 3.0 * mf * dd * growth / (delta * root) * (j2 + j3);
    Ok(RateBound {
        horizon,
        j1,
        j2,
        j3,
        e_tau,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_without_zeta_is_geometric() {
        let b = beta_envelope(20, 5, 2.0, 0.5, &Schedule::Zero).unwrap();
        for (t, v) in b.beta.iter().enumerate() {
            assert!((v - 5.0 * 2.0 * 0.5f64.powi(t as i32)).abs() < 1e-15);
        }
        assert!(beta_envelope(5, 5, 1.0, 1.0, &Schedule::Zero).is_err());
        assert!(beta_envelope(5, 5, 1.0, 0.5, &Schedule::power(1.0, 1.0)).is_err());
    }

    #[test]
    fn beta_is_nonnegative_and_decays() {
        let b = beta_envelope(5000, 50, 3.0, 0.9, &Schedule::power(1.0 / 3.0, 3.0)).unwrap();
        assert!(b.beta.iter().all(|&v| v >= 0.0));
        assert!(b.weighted[5000] < b.weighted[500]);
    }
}
