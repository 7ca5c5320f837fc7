#![allow(dead_code)]

use etgp::config::ExperimentConfig;
use etgp::graph::GraphSequence;
use etgp::objective::{LeastSquaresInstance, Objective};
use etgp::schedules::Schedule;

pub fn desk(sigma: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.sigma = sigma;
    cfg
}

/// `A(t)` built from the snapshot's edge list: `a_ij = 1/(|out(j)| + 1)` for
/// `j → i` or `i = j`.
pub fn mixing_from_edges(graph: &GraphSequence, t: usize) -> Vec<Vec<f64>> {
    let snap = graph.snapshot(t);
    let m = snap.node_count();
    let mut out_deg = vec![1usize; m];
    for (j, _) in snap.edges() {
        out_deg[j] += 1;
    }
    let mut a = vec![vec![0.0; m]; m];
    for j in 0..m {
        a[j][j] = 1.0 / out_deg[j] as f64;
    }
    for (j, i) in snap.edges() {
        a[i][j] = 1.0 / out_deg[j] as f64;
    }
    a
}

/// Plain gradient-push, one straight loop per round.
pub fn vanilla_gradient_push(
    graph: &GraphSequence,
    inst: &LeastSquaresInstance,
    alpha: &Schedule,
    x0: &[f64],
    rounds: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let m = inst.agents();
    let d = inst.dim();
    let mut x = x0.to_vec();
    let mut y = vec![1.0; m];
    let mut states = vec![(x.clone(), y.clone())];
    let mut grad = vec![0.0; d];
    for t in 0..rounds {
        let a = mixing_from_edges(graph, t);
        let mut next_x = vec![0.0; m * d];
        let mut next_y = vec![0.0; m];
        for i in 0..m {
            let mut w = vec![0.0; d];
            for j in 0..m {
                if a[i][j] != 0.0 {
                    next_y[i] += a[i][j] * y[j];
                    for c in 0..d {
                        w[c] += a[i][j] * x[j * d + c];
                    }
                }
            }
            let z: Vec<f64> = w.iter().map(|v| v / next_y[i]).collect();
            inst.gradient(i, &z, &mut grad);
            let step = alpha.value(t + 1);
            for c in 0..d {
                next_x[i * d + c] = w[c] - step * grad[c];
            }
        }
        x = next_x;
        y = next_y;
        states.push((x.clone(), y.clone()));
    }
    states
}

/// `A(t−1:0) 𝟙` for `t ∈ [0, rounds]`.
pub fn push_sum_weights(graph: &GraphSequence, rounds: usize) -> Vec<Vec<f64>> {
    let m = graph.node_count();
    let mut v = vec![1.0; m];
    let mut out = vec![v.clone()];
    for t in 0..rounds {
        let a = mixing_from_edges(graph, t);
        v = (0..m).map(|i| (0..m).map(|j| a[i][j] * v[j]).sum()).collect();
        out.push(v.clone());
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
