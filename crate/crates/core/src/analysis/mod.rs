//! Metrics and theory checks computed from trajectory logs.

pub mod invariants;
pub mod metrics;
pub mod theory;

pub use invariants::{error_bound, mass_residuals, trigger_hold, ErrorBound, MassResiduals, TriggerHold};
pub use metrics::{compute_metrics, Metrics, TERMINATION_EPS};
pub use theory::{
    beta_envelope, compute_m_zeta, consensus_check, rate_bound, trajectory_gradient_bound,
    y_consensus_check, BetaEnvelope, ConsensusCheck, CorollaryCheck, DisagreementBound, MZeta,
    RateBound, RegionBound, TheoryReport, YConsensus,
};
