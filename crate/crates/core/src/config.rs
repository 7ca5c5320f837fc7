//! Experiment configuration: TOML with `[problem]`, `[graph]`, `[schedules]`,
//! `[run]`, `[output]`, `[table1]` and `[curves]` blocks. Every key has a
//! default, so an empty file is a valid desk-scale configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{ScheduleSet, Termination};
use crate::error::{Error, Result};
use crate::graph::{k_out_neighbors_graph, DirectedGraphSnapshot, GraphKind, GraphSequence};
use crate::schedules::Schedule;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    pub schedules: ScheduleConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
    pub table1: Table1Config,
    pub curves: CurvesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub m: usize,
    pub d: usize,
    pub p: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            m: 50,
            d: 5,
            p: 1,
            sigma: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    /// Static digraph, `k` out-neighbors per node.
    KOut,
    /// Fresh Erdős–Rényi digraph each round, `window`-connected.
    Random,
    /// Static directed ring.
    Cycle,
    /// Static complete digraph.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphFamily,
    pub k: usize,
    /// Connectivity window `B`.
    pub window: usize,
    pub edge_probability: f64,
    pub seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            kind: GraphFamily::KOut,
            k: 4,
            window: 1,
            edge_probability: 0.1,
            seed: 2,
        }
    }
}

impl GraphConfig {
    /// Builds the sequence for `m` nodes; `horizon` bounds the window check of
    /// random sequences.
    pub fn build(&self, m: usize, seed: u64, horizon: usize) -> Result<GraphSequence> {
        match self.kind {
            GraphFamily::KOut => k_out_neighbors_graph(m, self.k, seed),
            GraphFamily::Random => {
                GraphSequence::seeded_random(m, self.edge_probability, self.window, horizon.max(1), seed)
            }
            GraphFamily::Cycle => {
                let edges = (0..m).map(|i| (i, (i + 1) % m));
                GraphSequence::new(GraphKind::Static(DirectedGraphSnapshot::new(m, edges)?), seed)
            }
            GraphFamily::Complete => {
                let edges = (0..m).flat_map(|i| (0..m).map(move |j| (i, j)));
                GraphSequence::new(GraphKind::Static(DirectedGraphSnapshot::new(m, edges)?), seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha: Schedule,
    pub tau: Schedule,
    pub zeta: Schedule,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            alpha: Schedule::power(1.0, 0.52),
            tau: Schedule::power(1.0, 1.5),
            zeta: Schedule::power(1.0 / 3.0, 3.0),
        }
    }
}

impl From<ScheduleConfig> for ScheduleSet {
    fn from(s: ScheduleConfig) -> Self {
        ScheduleSet {
            alpha: s.alpha,
            tau: s.tau,
            zeta: s.zeta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    /// Stop at the first round with `R_d < eps` (capped at `cap`).
    pub terminate: bool,
    pub eps: f64,
    pub cap: usize,
    pub trials: usize,
    /// Seed of the initial states; trial `k` uses `seed + k`.
    pub seed: u64,
    /// Keep agent states every `thin` rounds (0: endpoints only).
    pub thin: usize,
    /// Clip gradients at the region bound `D`.
    pub clip: bool,
    /// Sphere and ball samples for the gradient bound.
    pub bound_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let term = Termination::default();
        Self {
            horizon: 1000,
            terminate: false,
            eps: term.eps,
            cap: term.cap,
            trials: 20,
            seed: 3,
            thin: 1,
            clip: false,
            bound_samples: 200,
        }
    }
}

impl RunConfig {
    pub fn termination(&self) -> Option<Termination> {
        self.terminate.then_some(Termination {
            eps: self.eps,
            cap: self.cap,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub trajectory: bool,
    pub theory: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            trajectory: true,
            theory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    pub alpha: Schedule,
    pub taus: Vec<Schedule>,
    pub zetas: Vec<Schedule>,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            alpha: Schedule::power(1.0, 0.52),
            taus: [0.0, 1.1, 1.3, 1.5, 1.7]
                .iter()
                .map(|&p| if p == 0.0 { Schedule::Zero } else { Schedule::power(1.0, p) })
                .collect(),
            zetas: vec![Schedule::Zero, Schedule::power(1.0 / 3.0, 3.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveVariant {
    pub label: String,
    pub tau: Schedule,
    pub zeta: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub alpha: Schedule,
    pub horizon: usize,
    pub variants: Vec<CurveVariant>,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        let v = |label: &str, tau, zeta| CurveVariant {
            label: label.to_string(),
            tau,
            zeta,
        };
        let cubic = Schedule::power(1.0 / 3.0, 3.0);
        Self {
            alpha: Schedule::inverse_sqrt(),
            horizon: 20_000,
            variants: vec![
                v("tau1.5", Schedule::power(1.0, 1.5), cubic),
                v("tau0.75", Schedule::power(1.0, 0.75), cubic),
                v("zeta1", Schedule::power(1.0, 1.5), Schedule::power(1.0, 1.0)),
                v("zero", Schedule::Zero, Schedule::Zero),
                v("const0.05", Schedule::Constant(0.05), Schedule::Constant(0.05)),
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let p = &self.problem;
        if p.m == 0 || p.d == 0 || p.p == 0 {
            return bad("problem: m, d, p must be ≥ 1".into());
        }
        if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
            return bad(format!("problem: sigma must be ≥ 0 (got {})", p.sigma));
        }
        let g = &self.graph;
        if g.kind == GraphFamily::KOut && (g.k == 0 || g.k >= p.m) {
            return bad(format!("graph: k must lie in [1, m − 1] (got k = {}, m = {})", g.k, p.m));
        }
        if g.kind == GraphFamily::Random && !(0.0..=1.0).contains(&g.edge_probability) {
            return bad("graph: edge_probability must lie in [0, 1]".into());
        }
        if g.window == 0 {
            return bad("graph: window must be ≥ 1".into());
        }
        for s in [self.schedules.alpha, self.schedules.tau, self.schedules.zeta, self.table1.alpha, self.curves.alpha] {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.schedules.alpha.is_zero() || self.table1.alpha.is_zero() || self.curves.alpha.is_zero() {
            return bad("stepsize must be positive".into());
        }
        if !(self.run.eps > 0.0) {
            return bad("run: eps must be positive".into());
        }
        if self.run.trials == 0 {
            return bad("run: trials must be ≥ 1".into());
        }
        let mut labels: Vec<&str> = self.curves.variants.iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("curves: variant labels must be unique".into());
        }
        if labels.iter().any(|l| l.is_empty() || l.contains(['/', '\\'])) {
            return bad("curves: labels must be non-empty and contain no path separators".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip() {
        let text = r#"
            [problem]
            m = 8
            sigma = 0.5
            [graph]
            kind = "random"
            window = 3
            edge_probability = 0.2
            [schedules]
            alpha = "power 1 0.5"
            tau = "const 0.05"
            zeta = "zero"
            [[curves.variants]]
            label = "a"
            tau = "power 1 1.5"
            zeta = "power 1/3 3"
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.schedules.tau, Schedule::Constant(0.05));
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("[problem]\nm = 0").is_err());
        assert!(ExperimentConfig::parse("[problem]\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("[schedules]\ntau = \"linear 2\"").is_err());
        assert!(ExperimentConfig::parse("[graph]\nk = 50").is_err());
    }
}
