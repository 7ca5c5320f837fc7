mod common;

use std::sync::Arc;

use common::*;
use etgp::analysis::{
    beta_envelope, compute_m_zeta, compute_metrics, consensus_check, rate_bound, trajectory_gradient_bound,
    y_consensus_check, DisagreementBound, TheoryReport,
};
use etgp::engine::{run, InitialState, ScheduleSet, SimConfig};
use etgp::experiments::{prepare_trial, Trial};
use etgp::graph::{estimate_phi_decay, DirectedGraphSnapshot, GraphKind, GraphSequence};
use etgp::log::{LogOptions, TrajectoryLog};
use etgp::objective::{generate_least_squares, solve_optimum, Objective};
use etgp::schedules::Schedule;

fn default_schedules() -> ScheduleSet {
    ScheduleSet {
        alpha: Schedule::power(1.0, 0.52),
        tau: Schedule::power(1.0, 1.5),
        zeta: Schedule::power(1.0 / 3.0, 3.0),
    }
}

fn desk_run(schedules: ScheduleSet, horizon: usize, seed: u64) -> (Trial, TrajectoryLog) {
    let trial = prepare_trial(&desk(0.1), seed, horizon).unwrap();
    let log = run(&trial.sim_config(schedules, horizon, None, 1, true)).unwrap();
    (trial, log)
}

fn report_for(trial: &Trial, log: &TrajectoryLog, zeta: &Schedule) -> TheoryReport {
    let est = estimate_phi_decay(&trial.graph, log.horizon()).unwrap();
    let region = trajectory_gradient_bound(log, trial.instance.as_ref(), &trial.optimum.x, 100, 1).unwrap();
    TheoryReport::new(log, &est, zeta, region.effective()).unwrap()
}

#[test]
fn metrics_basics() {
    let (trial, log) = desk_run(default_schedules(), 200, 0);
    let m = compute_metrics(&log, trial.instance.as_ref(), &trial.optimum);
    assert_eq!(m.r_d[0], 1.0);
    assert!(m.r_c.iter().all(|&v| v >= 0.0));
    assert!(m.r_f.iter().all(|&v| v >= -1e-9));
    assert_eq!(m.k_f, None);
    assert_eq!(m, compute_metrics(&log, trial.instance.as_ref(), &trial.optimum));
    // Online metrics agree with the post-processed ones.
    for (k, &t) in m.t.iter().enumerate() {
        assert_eq!(log.metrics[t].r_d, m.r_d[k]);
        assert_eq!(log.metrics[t].r_c, m.r_c[k]);
    }
}

#[test]
fn single_agent_has_no_disagreement() {
    let inst = generate_least_squares(1, 3, 1, 0.1, 1).unwrap();
    let opt = solve_optimum(&inst);
    let graph = GraphSequence::new(GraphKind::Static(DirectedGraphSnapshot::empty(1).unwrap()), 0).unwrap();
    let sim = SimConfig {
        graph,
        objective: Arc::new(inst.clone()),
        schedules: default_schedules(),
        initial: InitialState::Gaussian { seed: 1 },
        z_tilde0: None,
        clip: None,
        horizon: 30,
        termination: None,
        log: LogOptions { thin: 1, optimum: None },
    };
    let log = run(&sim).unwrap();
    let m = compute_metrics(&log, &inst, &opt);
    assert!(m.r_c.iter().all(|&v| v == 0.0));
}

#[test]
fn degenerate_distance_is_flagged() {
    let inst = generate_least_squares(4, 2, 1, 0.0, 2).unwrap();
    let opt = solve_optimum(&inst);
    let trial = prepare_trial(&desk(0.0), 0, 5).unwrap();
    let mut sim = trial.sim_config(default_schedules(), 5, None, 1, false);
    sim.graph = GraphSequence::new(
        GraphKind::Static(DirectedGraphSnapshot::new(4, (0..4).map(|i| (i, (i + 1) % 4))).unwrap()),
        0,
    )
    .unwrap();
    sim.objective = Arc::new(inst.clone());
    sim.initial = InitialState::Given(opt.x.repeat(4));
    sim.log.optimum = None;
    let log = run(&sim).unwrap();
    let m = compute_metrics(&log, &inst, &opt);
    assert!(m.degenerate_distance);
    assert!(m.r_d.iter().all(|&v| v == 0.0));
}

#[test]
fn m_zeta_properties() {
    let (_, log) = desk_run(ScheduleSet { zeta: Schedule::Zero, ..default_schedules() }, 100, 1);
    let mz = compute_m_zeta(&log, &Schedule::Zero, 100);
    assert_eq!((mz.center, mz.half_width, mz.b_zeta()), (50.0, 0.0, 1.0));

    let zeta = Schedule::power(1.0 / 3.0, 3.0);
    let (_, log) = desk_run(default_schedules(), 400, 1);
    let f_zeta = zeta.total_sum().upper();
    let mut width = f64::INFINITY;
    for t in [10, 50, 100, 400] {
        let mz = compute_m_zeta(&log, &zeta, t);
        assert!(mz.hi() >= (1.0 - f_zeta) * 50.0);
        assert!((mz.center - 50.0).abs() <= 50.0 * 0.4008);
        assert!(mz.half_width <= width);
        width = mz.half_width;
        assert!(mz.b_zeta() > 0.0);
    }
    assert!(log.min_weight() > 0.0);
}

#[test]
fn beta_envelope_shapes() {
    let (c0, lambda) = (1.5, 0.8);
    let b = beta_envelope(200, 10, c0, lambda, &Schedule::Zero).unwrap();
    for t in 0..=200 {
        assert!((b.beta[t] - 10.0 * c0 * lambda.powi(t as i32)).abs() <= 1e-12 * b.beta[0]);
    }
    let b = beta_envelope(20_000, 50, 1.0, 0.6, &Schedule::power(1.0 / 3.0, 3.0)).unwrap();
    assert!(b.beta.iter().all(|&v| v >= 0.0));
    let w = &b.weighted;
    assert!(w[20_000] < w[2_000] && w[2_000] < w[200]);
    assert!(beta_envelope(10, 5, 1.0, 1.0, &Schedule::Zero).is_err());
    assert!(beta_envelope(10, 5, 1.0, 0.5, &Schedule::power(1.0, 1.0)).is_err());
}

#[test]
fn y_consensus_on_complete_graph_is_exact() {
    let trial = prepare_trial(&desk(0.1), 0, 30).unwrap();
    let mut sim = trial.sim_config(ScheduleSet { zeta: Schedule::Zero, ..default_schedules() }, 30, None, 1, false);
    let m = 50;
    sim.graph = GraphSequence::new(
        GraphKind::Static(
            DirectedGraphSnapshot::new(m, (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))))
                .unwrap(),
        ),
        0,
    )
    .unwrap();
    let log = run(&sim).unwrap();
    let est = estimate_phi_decay(&sim.graph, 30).unwrap();
    let mz = compute_m_zeta(&log, &Schedule::Zero, 30);
    let beta = beta_envelope(30, m, est.c0, est.lambda, &Schedule::Zero).unwrap();
    let y = y_consensus_check(&log, &est, &mz, &beta);
    assert!(y.deviation.iter().all(|&d| d < 1e-13));
    assert!(y.violations.is_empty());
}

#[test]
fn bounds_dominate_on_desk_run() {
    let sched = default_schedules();
    let (trial, log) = desk_run(sched, 2000, 0);
    let report = report_for(&trial, &log, &sched.zeta);
    assert!(report.delta > 0.0 && report.m_zeta.b_zeta() > 0.0);
    let est = estimate_phi_decay(&trial.graph, 2000).unwrap();
    let y = y_consensus_check(&log, &est, &report.m_zeta, &report.beta);
    assert!(y.violations.is_empty());
    assert!(*y.deviation.last().unwrap() < 1e-6);
    let c = consensus_check(&log, &report, &sched);
    assert!(c.violations.is_empty(), "{:?}", &c.violations[..c.violations.len().min(5)]);
    let cor = c.corollary.unwrap();
    assert!(cor.weighted_measured <= cor.summed_bound);
    assert!(!cor.alpha_matches);
}

#[test]
fn zero_state_zero_gradient_bound_vanishes() {
    struct Flat;
    impl Objective for Flat {
        fn agents(&self) -> usize {
            6
        }
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, _: usize, _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _: usize, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }
    let graph = etgp::graph::k_out_neighbors_graph(6, 2, 1).unwrap();
    let sched = ScheduleSet { tau: Schedule::Zero, zeta: Schedule::Zero, ..default_schedules() };
    let sim = SimConfig {
        graph: graph.clone(),
        objective: Arc::new(Flat),
        schedules: sched,
        initial: InitialState::Given(vec![0.0; 12]),
        z_tilde0: None,
        clip: None,
        horizon: 50,
        termination: None,
        log: LogOptions { thin: 1, optimum: None },
    };
    let log = run(&sim).unwrap();
    let est = estimate_phi_decay(&graph, 50).unwrap();
    let report = TheoryReport::new(&log, &est, &Schedule::Zero, 0.0).unwrap();
    let c = consensus_check(&log, &report, &sched);
    assert!(c.measured.iter().all(|&v| v == 0.0));
    assert!(c.bound.iter().all(|&v| v == 0.0));
}

#[test]
fn bound_grows_with_initial_mass() {
    let sched = default_schedules();
    let (trial, log) = desk_run(sched, 100, 2);
    let mut report = report_for(&trial, &log, &sched.zeta);
    let before: Vec<f64> = {
        let b = DisagreementBound::new(&report, &sched);
        (0..100).map(|t| b.value(t, 1.0)).collect()
    };
    report.x0_l1 *= 2.0;
    let b = DisagreementBound::new(&report, &sched);
    for t in 0..100 {
        assert!(b.value(t, 1.0) > before[t]);
    }
}

#[test]
fn rate_bound_contract() {
    let sched = default_schedules();
    let (trial, log) = desk_run(sched, 300, 0);
    let report = report_for(&trial, &log, &sched.zeta);
    assert!(rate_bound(&log, &report, &sched, &trial.optimum.x, 100).is_err());

    let sqrt = ScheduleSet { alpha: Schedule::inverse_sqrt(), tau: Schedule::Zero, zeta: Schedule::Zero };
    let (trial, log) = desk_run(sqrt, 1001, 0);
    let report = report_for(&trial, &log, &sqrt.zeta);
    assert_eq!(report.m_zeta.b_zeta(), 1.0);
    let mut prev = (0.0, 0.0, 0.0);
    for t in [100, 300, 1000] {
        let rb = rate_bound(&log, &report, &sqrt, &trial.optimum.x, t).unwrap();
        assert_eq!(rb.e_tau, 0.0);
        assert!(rb.j1 >= prev.0 && rb.j2 >= prev.1 && rb.j3 >= prev.2);
        prev = (rb.j1, rb.j2, rb.j3);
        let measured = log.metrics[t + 1].f_gap_max.unwrap();
        assert!(measured <= rb.value, "T={t}: {measured} > {}", rb.value);
    }
}
