//! Empirical limit vectors `φ(t)` of backward products and the geometric
//! envelope `|[A(t:s)]_ij − φ_i(t)| ≤ C₀ λ^{t−s}`.

use nalgebra::DMatrix;

use super::{GraphSequence, MixingMatrix};
use crate::error::{Error, Result};

/// Reference product depth is `PHI_DEPTH_PER_NODE · m` rounds.
pub const PHI_DEPTH_PER_NODE: usize = 8;

/// Deviations at or below this level are treated as numerical zero.
pub const DEVIATION_FLOOR: f64 = 1e-13;

const FIT_TIMES: usize = 4;

#[derive(Debug, Clone)]
pub struct PhiEstimate {
    phi: Vec<Vec<f64>>,
    depth: usize,
    pub c0: f64,
    pub lambda: f64,
    /// `min_{t ≤ horizon} min_i [A(t:0) 𝟙]_i`.
    pub q: f64,
    /// `(gap, max deviation over the fit times)` for every gap on the grid.
    pub deviations: Vec<(usize, f64)>,
    /// True when no deviation rose above the numerical floor.
    pub degenerate: bool,
}

impl PhiEstimate {
    pub fn horizon(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn phi(&self, t: usize) -> &[f64] {
        &self.phi[t]
    }

    /// Start of the reference product used for `φ̂(t)`.
    pub fn reference_start(&self, t: usize) -> usize {
        t.saturating_sub(self.depth)
    }

    /// `t − s` of the reference product behind `φ̂(t)`.
    pub fn reference_gap(&self, t: usize) -> usize {
        t - self.reference_start(t)
    }

    pub fn envelope(&self, gap: usize) -> f64 {
        self.c0 * self.lambda.powi(gap as i32)
    }

    /// Margin absorbing the finite-depth error of `φ̂(t)` when comparing
    /// `y(t+1)` against `m_ζ φ̂(t)`; includes a roundoff floor.
    pub fn slack(&self, t: usize, m_zeta: f64) -> f64 {
        m_zeta.abs() * (self.envelope(self.reference_gap(t)) + DEVIATION_FLOOR)
    }

    /// Fitted points used for the envelope (deviation above the floor).
    pub fn fit_points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.deviations
            .iter()
            .copied()
            .filter(|&(_, d)| d > DEVIATION_FLOOR)
    }
}

/// Estimates `φ̂(t)` for `t ∈ [0, horizon]`, fits `(C₀, λ)` and computes `Q`.
///
/// `φ̂(t)` is the row average of `A(t:s)` with `s = max(0, t − 8m)`. The fit
/// grid uses up to four times in `[horizon/2, horizon]` and every gap up to the
/// reference depth; `C₀` is raised until the envelope dominates every fitted
/// point.
pub fn estimate_phi_decay(seq: &GraphSequence, horizon: usize) -> Result<PhiEstimate> {
    let m = seq.node_count();
    let depth = PHI_DEPTH_PER_NODE * m;
    let phi = phi_series(seq, horizon, depth);
    let q = min_column_mass(seq, horizon);

    let times = fit_times(horizon);
    let max_gap = depth.min(horizon);
    let mut deviations: Vec<(usize, f64)> = (0..=max_gap).map(|g| (g, 0.0)).collect();
    for &t in &times {
        let mut prod = seq.mixing(t).dense().clone();
        for g in 0..=max_gap.min(t) {
            if g > 0 {
                prod = right_multiply(&prod, &seq.mixing(t - g));
            }
            let dev = max_deviation(&prod, &phi[t]);
            deviations[g].1 = deviations[g].1.max(dev);
        }
    }

    let (c0, lambda, degenerate) = fit_envelope(&deviations)?;
    Ok(PhiEstimate {
        phi,
        depth,
        c0,
        lambda,
        q,
        deviations,
        degenerate,
    })
}

/// `max_ij |[A(t:s)]_ij − φ̂_i(t)|`.
pub fn product_deviation(seq: &GraphSequence, est: &PhiEstimate, t: usize, s: usize) -> f64 {
    max_deviation(&super::matrix_product(seq, t, s), est.phi(t))
}

fn fit_times(horizon: usize) -> Vec<usize> {
    let lo = horizon / 2;
    let mut ts: Vec<usize> = (0..FIT_TIMES)
        .map(|k| lo + (horizon - lo) * k / (FIT_TIMES - 1).max(1))
        .collect();
    ts.dedup();
    ts
}

fn phi_series(seq: &GraphSequence, horizon: usize, depth: usize) -> Vec<Vec<f64>> {
    let m = seq.node_count();
    let uniform = vec![1.0 / m as f64; m];
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    let mut buf = vec![0.0; m];
    for t in 0..=horizon {
        if t <= depth {
            // Reference start is 0: extend the previous product by one factor.
            let prev = if t == 0 { &uniform } else { &out[t - 1] };
            seq.mixing(t).apply_vec(prev, &mut buf);
            out.push(buf.clone());
            continue;
        }
        if let Some(p) = seq.period() {
            // A(t : t−depth) only depends on t mod p once the window is full.
            let earlier = t - p;
            if earlier > depth {
                let v = out[earlier].clone();
                out.push(v);
                continue;
            }
        }
        let mut v = uniform.clone();
        for k in t - depth..=t {
            seq.mixing(k).apply_vec(&v, &mut buf);
            std::mem::swap(&mut v, &mut buf);
        }
        out.push(v);
    }
    out
}

fn min_column_mass(seq: &GraphSequence, horizon: usize) -> f64 {
    let m = seq.node_count();
    let mut v = vec![1.0; m];
    let mut buf = vec![0.0; m];
    let mut q = f64::INFINITY;
    for t in 0..=horizon {
        seq.mixing(t).apply_vec(&v, &mut buf);
        std::mem::swap(&mut v, &mut buf);
        q = v.iter().copied().fold(q, f64::min);
    }
    q
}

fn right_multiply(p: &DMatrix<f64>, a: &MixingMatrix) -> DMatrix<f64> {
    let m = p.nrows();
    let mut out = DMatrix::zeros(m, m);
    for k in 0..m {
        let pk = p.column(k);
        for &(j, akj) in a.row(k) {
            let mut col = out.column_mut(j);
            col.axpy(akj, &pk, 1.0);
        }
    }
    out
}

fn max_deviation(prod: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let mut dev: f64 = 0.0;
    for j in 0..prod.ncols() {
        for (i, &p) in phi.iter().enumerate() {
            dev = dev.max((prod[(i, j)] - p).abs());
        }
    }
    dev
}

fn fit_envelope(deviations: &[(usize, f64)]) -> Result<(f64, f64, bool)> {
    let mut pts: Vec<(f64, f64)> = deviations
        .iter()
        .filter(|&&(_, d)| d > DEVIATION_FLOOR)
        .map(|&(g, d)| (g as f64, d.ln()))
        .collect();
    if pts.is_empty() {
        // Mixes to the floor immediately (e.g. the complete digraph).
        return Ok((1.0, DEVIATION_FLOOR, true));
    }
    if pts.len() == 1 {
        // Anchor the line at the first gap that fell to the floor.
        let g0 = pts[0].0 as usize;
        match deviations.iter().find(|&&(g, d)| g > g0 && d <= DEVIATION_FLOOR) {
            Some(&(g1, _)) => pts.push((g1 as f64, DEVIATION_FLOOR.ln())),
            None => {
                return Err(Error::DecayFit(
                    "a single gap on the grid; cannot fit a decay rate".into(),
                ))
            }
        }
    }
    let n = pts.len() as f64;
    let mean_g = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_g).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_g) * (p.1 - mean_l)).sum();
    let slope = sxy / sxx;
    if !slope.is_finite() || slope >= -1e-8 {
        return Err(Error::DecayFit(format!(
            "deviations do not decay (log-slope {slope:.3e}); sequence is likely not connected"
        )));
    }
    let lambda = slope.exp();
    let c0 = deviations
        .iter()
        .filter(|&&(_, d)| d > DEVIATION_FLOOR)
        .map(|&(g, d)| d / lambda.powi(g as i32))
        .fold(1.0, f64::max);
    Ok((c0, lambda, false))
}
