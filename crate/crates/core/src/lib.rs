//! Displacement-based formation control for planar agents whose sensing
//! frames are rotated by unknown, time-varying angles, over signed switching
//! digraphs.
//!
//! The crate has three layers:
//!
//! * [`signed_graph`]: signed digraphs, their Laplacian and general stochastic
//!   matrix, and the structural hypotheses (coupling bounds, neighbor sharing).
//! * [`polytope`] and [`dynamics`]: the section polytopes, membership by LP,
//!   checkers for the contraction properties, the agent model and the
//!   per-step contraction certificate.
//! * [`sim`], [`scenario`] and [`verify`]: the parameter solver, the
//!   simulation loop, scenario files and the verification suite.

pub mod dynamics;
pub mod error;
pub mod lp;
pub mod polytope;
pub mod sampling;
pub mod scenario;
pub mod signed_graph;
pub mod sim;
pub mod verify;

/// Numeric tolerances shared across the crate.
pub mod tol {
    /// Absolute tolerance for matrix identities.
    pub const MATRIX: f64 = 1e-12;
    /// Violations of an inequality smaller than this count as ties.
    pub const INEQ_SLACK: f64 = 1e-9;
    /// Row-sum tolerance for general stochastic matrices.
    pub const ROW_SUM: f64 = 1e-9;
}

pub use dynamics::{AgentState, FormationSpec, Lemma6Certificate, RotationProfile};
pub use error::{FormationError, Result};
pub use polytope::{ExtremeSet, LemmaId, LemmaReport, MembershipCertificate, SamplingPlan};
pub use scenario::{Scenario, ScenarioConfig};
pub use signed_graph::{CouplingBounds, Edge, GeneralStochasticMatrix, GraphDoc, SignedDigraph};
pub use sim::{ConvergenceReport, ParameterCertificate, TopologySchedule, TrajectoryLog};
