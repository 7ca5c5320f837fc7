//! Local convex costs `f_i`, the decentralized least-squares generator, the
//! global optimum and the gradient bound `D`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Per-agent cost oracle. Agents are 0-based.
pub trait Objective: Send + Sync {
    fn agents(&self) -> usize;

    fn dim(&self) -> usize;

    fn value(&self, agent: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out`.
    fn gradient(&self, agent: usize, x: &[f64], out: &mut [f64]);

    /// `f(x) = Σ_i f_i(x)`.
    fn global_value(&self, x: &[f64]) -> f64 {
        (0..self.agents()).map(|i| self.value(i, x)).sum()
    }

    fn global_gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut g = vec![0.0; self.dim()];
        out.fill(0.0);
        for i in 0..self.agents() {
            self.gradient(i, x, &mut g);
            for (o, v) in out.iter_mut().zip(&g) {
                *o += v;
            }
        }
    }
}

/// `f_i(x) = ‖q_i − p_iᵀx‖²` with `p_i ∈ ℝ^{d×p}`, `q_i ∈ ℝᵖ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresInstance {
    m: usize,
    d: usize,
    p: usize,
    /// `inputs[i]` is `p_i` stored row-major (`d` rows of `p`).
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    pub meta: InstanceMeta,
}

/// How an instance was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub sigma: f64,
    pub seed: u64,
    /// Ground-truth weight `x̃`; empty for hand-built instances.
    pub x_true: Vec<f64>,
}

impl LeastSquaresInstance {
    /// Hand-built instance; `inputs[i]` is `p_i` row-major (`d × p`).
    pub fn from_parts(d: usize, p: usize, inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        let m = inputs.len();
        if m == 0 || d == 0 || p == 0 {
            return Err(Error::invalid("least squares needs m, d, p ≥ 1"));
        }
        if outputs.len() != m {
            return Err(Error::invalid("inputs and outputs disagree on agent count"));
        }
        for (i, (pi, qi)) in inputs.iter().zip(&outputs).enumerate() {
            if pi.len() != d * p || qi.len() != p {
                return Err(Error::invalid(format!("agent {i}: expected {d}×{p} input and {p} outputs")));
            }
        }
        Ok(Self {
            m,
            d,
            p,
            inputs,
            outputs,
            meta: InstanceMeta {
                sigma: 0.0,
                seed: 0,
                x_true: Vec::new(),
            },
        })
    }

    pub fn outputs_per_agent(&self) -> usize {
        self.p
    }

    pub fn input(&self, agent: usize) -> &[f64] {
        &self.inputs[agent]
    }

    pub fn output(&self, agent: usize) -> &[f64] {
        &self.outputs[agent]
    }

    /// `r = p_iᵀx − q_i`.
    fn residual(&self, agent: usize, x: &[f64], r: &mut [f64]) {
        let pi = &self.inputs[agent];
        let qi = &self.outputs[agent];
        for (k, rk) in r.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (row, xr) in x.iter().enumerate() {
                acc += pi[row * self.p + k] * xr;
            }
            *rk = acc - qi[k];
        }
    }

    /// Writes the instance as `inputs.csv`, `outputs.csv` and `meta.csv`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv_writer(&dir.join("inputs.csv"))?;
        w.write_record(["agent", "row", "col", "value"])?;
        for (i, pi) in self.inputs.iter().enumerate() {
            for r in 0..self.d {
                for c in 0..self.p {
                    w.write_record([i.to_string(), r.to_string(), c.to_string(), pi[r * self.p + c].to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("inputs.csv"), e))?;

        let mut w = csv_writer(&dir.join("outputs.csv"))?;
        w.write_record(["agent", "row", "value"])?;
        for (i, qi) in self.outputs.iter().enumerate() {
            for (r, v) in qi.iter().enumerate() {
                w.write_record([i.to_string(), r.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("outputs.csv"), e))?;

        let mut w = csv_writer(&dir.join("meta.csv"))?;
        w.write_record(["key", "value"])?;
        w.write_record(["m".to_string(), self.m.to_string()])?;
        w.write_record(["d".to_string(), self.d.to_string()])?;
        w.write_record(["p".to_string(), self.p.to_string()])?;
        w.write_record(["sigma".to_string(), self.meta.sigma.to_string()])?;
        w.write_record(["seed".to_string(), self.meta.seed.to_string()])?;
        let xt: Vec<String> = self.meta.x_true.iter().map(f64::to_string).collect();
        w.write_record(["x_true".to_string(), xt.join(" ")])?;
        w.flush().map_err(|e| Error::io(dir.join("meta.csv"), e))?;
        Ok(())
    }

    pub fn read_bundle(dir: &Path) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("instance bundle: {what}"));
        let mut meta = std::collections::HashMap::new();
        for rec in csv_reader(&dir.join("meta.csv"))?.records() {
            let rec = rec?;
            meta.insert(rec[0].to_string(), rec[1].to_string());
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        let m: usize = get("m")?.parse().map_err(|_| bad("m"))?;
        let d: usize = get("d")?.parse().map_err(|_| bad("d"))?;
        let p: usize = get("p")?.parse().map_err(|_| bad("p"))?;
        let sigma: f64 = get("sigma")?.parse().map_err(|_| bad("sigma"))?;
        let seed: u64 = get("seed")?.parse().map_err(|_| bad("seed"))?;
        let x_true = get("x_true")?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad("x_true")))
            .collect::<Result<Vec<_>>>()?;

        let mut inputs = vec![vec![f64::NAN; d * p]; m];
        for rec in csv_reader(&dir.join("inputs.csv"))?.records() {
            let rec = rec?;
            let idx = |k: usize| rec[k].parse::<usize>().map_err(|_| bad("inputs index"));
            let (i, r, c) = (idx(0)?, idx(1)?, idx(2)?);
            if i >= m || r >= d || c >= p {
                return Err(bad("inputs index out of range"));
            }
            inputs[i][r * p + c] = rec[3].parse().map_err(|_| bad("inputs value"))?;
        }
        let mut outputs = vec![vec![f64::NAN; p]; m];
        for rec in csv_reader(&dir.join("outputs.csv"))?.records() {
            let rec = rec?;
            let i: usize = rec[0].parse().map_err(|_| bad("outputs index"))?;
            let r: usize = rec[1].parse().map_err(|_| bad("outputs index"))?;
            if i >= m || r >= p {
                return Err(bad("outputs index out of range"));
            }
            outputs[i][r] = rec[2].parse().map_err(|_| bad("outputs value"))?;
        }
        if inputs.iter().chain(&outputs).flatten().any(|v| v.is_nan()) {
            return Err(bad("missing entries"));
        }
        let mut inst = Self::from_parts(d, p, inputs, outputs)?;
        inst.meta = InstanceMeta { sigma, seed, x_true };
        Ok(inst)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(BufReader::new(f)))
}

impl Objective for LeastSquaresInstance {
    fn agents(&self) -> usize {
        self.m
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, agent: usize, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.p];
        self.residual(agent, x, &mut r);
        r.iter().map(|v| v * v).sum()
    }

    fn gradient(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let pi = &self.inputs[agent];
        if self.p == 1 {
            let mut r = -self.outputs[agent][0];
            for (pr, xr) in pi.iter().zip(x) {
                r += pr * xr;
            }
            for (o, pr) in out.iter_mut().zip(pi) {
                *o = 2.0 * pr * r;
            }
            return;
        }
        let mut r = vec![0.0; self.p];
        self.residual(agent, x, &mut r);
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, rk) in r.iter().enumerate() {
                acc += pi[row * self.p + k] * rk;
            }
            *o = 2.0 * acc;
        }
    }
}

/// Draws `m` agents with `p_i` entries uniform on `[0, 1]`, `x̃ ~ N(0, I)` and
/// `q_i = p_iᵀx̃ + ε_i`, `ε_i ~ N(0, σ²I)`.
pub fn generate_least_squares(m: usize, d: usize, p: usize, sigma: f64, seed: u64) -> Result<LeastSquaresInstance> {
    if m == 0 || d == 0 || p == 0 {
        return Err(Error::invalid("least squares needs m, d, p ≥ 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise std must be ≥ 0 (got {sigma})")));
    }
    let mut rng = stream(seed, Stream::Instance);
    let x_true: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let unit = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
    let mut inputs = Vec::with_capacity(m);
    let mut outputs = Vec::with_capacity(m);
    for _ in 0..m {
        let pi: Vec<f64> = (0..d * p).map(|_| rng.sample(unit)).collect();
        let qi: Vec<f64> = (0..p)
            .map(|k| {
                let clean: f64 = (0..d).map(|r| pi[r * p + k] * x_true[r]).sum();
                let noise: f64 = StandardNormal.sample(&mut rng);
                clean + sigma * noise
            })
            .collect();
        inputs.push(pi);
        outputs.push(qi);
    }
    let mut inst = LeastSquaresInstance::from_parts(d, p, inputs, outputs)?;
    inst.meta = InstanceMeta { sigma, seed, x_true };
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// The normal equations were singular and a `1e−12` ridge was added.
    pub ridge_applied: bool,
    /// `‖Σ_i ∇f_i(x*)‖`.
    pub stationarity: f64,
}

const RIDGE: f64 = 1e-12;

/// Minimizer of `Σ_i ‖q_i − p_iᵀx‖²` via the normal equations.
pub fn solve_optimum(inst: &LeastSquaresInstance) -> Optimum {
    let (d, p) = (inst.d, inst.p);
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for i in 0..inst.m {
        let pi = DMatrix::from_row_slice(d, p, &inst.inputs[i]);
        let qi = DVector::from_column_slice(&inst.outputs[i]);
        gram += &pi * pi.transpose();
        rhs += &pi * qi;
    }
    let (mut x, ridge_applied) = match gram.clone().cholesky() {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let reg = &gram + DMatrix::identity(d, d) * RIDGE;
            let x = reg
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .unwrap_or_else(|| reg.pseudo_inverse(0.0).expect("svd converges") * &rhs);
            (x, true)
        }
    };
    // One round of iterative refinement.
    if let Some(ch) = gram.clone().cholesky() {
        let r = &rhs - &gram * &x;
        x += ch.solve(&r);
    }
    let x: Vec<f64> = x.iter().copied().collect();
    let mut g = vec![0.0; d];
    inst.global_gradient(&x, &mut g);
    Optimum {
        value: inst.global_value(&x),
        stationarity: norm(&g),
        x,
        ridge_applied,
    }
}

/// `D_i` and `D = max_i D_i` over a ball, with the region they hold on.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBound {
    pub per_agent: Vec<f64>,
    pub max: f64,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Multiplier applied to the largest sampled gradient norm.
pub const GRADIENT_SAFETY: f64 = 1.1;

/// Samples the center, `±radius` along every axis, `samples` points on the
/// sphere and `samples` points inside the ball; `D_i` is the largest
/// `‖∇f_i‖` seen times [`GRADIENT_SAFETY`].
pub fn estimate_gradient_bound(
    obj: &dyn Objective,
    center: &[f64],
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<GradientBound> {
    let d = obj.dim();
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive (got {radius})")));
    }
    if center.len() != d {
        return Err(Error::invalid("center has the wrong dimension"));
    }
    let mut points: Vec<Vec<f64>> = vec![center.to_vec()];
    for k in 0..d {
        for sign in [-1.0, 1.0] {
            let mut x = center.to_vec();
            x[k] += sign * radius;
            points.push(x);
        }
    }
    let mut rng = stream(seed, Stream::GradientSamples);
    for s in 0..2 * samples {
        let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&dir);
        if n == 0.0 {
            continue;
        }
        let scale = if s < samples {
            radius
        } else {
            radius * rng.random::<f64>().powf(1.0 / d as f64)
        };
        for (v, c) in dir.iter_mut().zip(center) {
            *v = c + *v / n * scale;
        }
        points.push(dir);
    }
    let mut g = vec![0.0; d];
    let per_agent: Vec<f64> = (0..obj.agents())
        .map(|i| {
            let worst = points
                .iter()
                .map(|x| {
                    obj.gradient(i, x, &mut g);
                    norm(&g)
                })
                .fold(0.0, f64::max);
            GRADIENT_SAFETY * worst
        })
        .collect();
    Ok(GradientBound {
        max: per_agent.iter().copied().fold(0.0, f64::max),
        per_agent,
        center: center.to_vec(),
        radius,
    })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(p: &[f64], q: &[f64]) -> LeastSquaresInstance {
        LeastSquaresInstance::from_parts(1, 1, p.iter().map(|&v| vec![v]).collect(), q.iter().map(|&v| vec![v]).collect())
            .unwrap()
    }

    #[test]
    fn gradient_by_hand() {
        let inst = scalar(&[1.0], &[2.0]);
        let mut g = [0.0];
        inst.gradient(0, &[0.0], &mut g);
        assert_eq!(g[0], -4.0);
        assert_eq!(inst.value(0, &[0.0]), 4.0);
    }

    #[test]
    fn optimum_by_hand() {
        let one = solve_optimum(&scalar(&[1.0], &[2.0]));
        assert_relative_eq!(one.x[0], 2.0, epsilon = 1e-14);
        assert!(one.value.abs() < 1e-24);
        let two = solve_optimum(&scalar(&[1.0, 1.0], &[0.0, 2.0]));
        assert_relative_eq!(two.x[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(two.value, 2.0, epsilon = 1e-12);
        assert!(!two.ridge_applied);
    }

    #[test]
    fn singular_normal_equations_are_flagged() {
        let inst = LeastSquaresInstance::from_parts(2, 1, vec![vec![1.0, 0.0]], vec![vec![3.0]]).unwrap();
        let opt = solve_optimum(&inst);
        assert!(opt.ridge_applied);
        assert_relative_eq!(opt.x[0], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_bound_scalar() {
        let inst = scalar(&[1.0], &[0.0]);
        let b = estimate_gradient_bound(&inst, &[0.0], 1.0, 16, 0).unwrap();
        assert_relative_eq!(b.max, 2.2, epsilon = 1e-15);
        let flat = scalar(&[0.0, 0.0], &[0.0, 0.0]);
        let b = estimate_gradient_bound(&flat, &[0.3], 1.0, 16, 0).unwrap();
        assert_eq!(b.max, 0.0);
        assert!(estimate_gradient_bound(&inst, &[0.0], 0.0, 4, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_shaped() {
        let a = generate_least_squares(50, 5, 1, 0.1, 3).unwrap();
        let b = generate_least_squares(50, 5, 1, 0.1, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.agents(), 50);
        assert_eq!(a.dim(), 5);
        assert!(a.inputs.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        let c = generate_least_squares(50, 5, 1, 0.1, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_instance_recovers_truth() {
        let inst = generate_least_squares(30, 4, 2, 0.0, 9).unwrap();
        let opt = solve_optimum(&inst);
        for (x, t) in opt.x.iter().zip(&inst.meta.x_true) {
            assert!((x - t).abs() < 1e-9);
        }
        assert!(opt.value < 1e-18);
    }

    #[test]
    fn bundle_round_trip() {
        let inst = generate_least_squares(4, 3, 2, 0.1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        inst.write_bundle(dir.path()).unwrap();
        assert_eq!(LeastSquaresInstance::read_bundle(dir.path()).unwrap(), inst);
    }
}
