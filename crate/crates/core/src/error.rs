use thiserror::Error;

use crate::polytope::LemmaReport;
use crate::signed_graph::CouplingClause;

pub type Result<T, E = FormationError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FormationError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid coupling bounds: {0}")]
    InvalidBounds(String),

    #[error("matrix is not general stochastic: {0}")]
    NotStochastic(String),

    #[error("coupling constraints violated: {}", join_clauses(.0))]
    CouplingViolation(Vec<CouplingClause>),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("lemma check found a counterexample: {}", .0.summary())]
    LemmaViolation(Box<LemmaReport>),

    #[error("contraction certificate failed at step {step}: max column weight {max_column_sum} > bound {bound}")]
    CertificateFailure { step: usize, max_column_sum: f64, bound: f64 },

    #[error("infeasible parameters: delta {delta} exceeds the maximal admissible delta {max_delta}")]
    InfeasibleParameters { delta: f64, max_delta: f64 },

    #[error("invalid scenario configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),

    #[error("dimension {n} is above the enumeration guard {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("index {index} out of range {range}")]
    IndexOutOfRange { index: usize, range: String },

    #[error("point is not in the cone of the generators (LP phase-one residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("linear program failed: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn join_clauses(clauses: &[CouplingClause]) -> String {
    clauses.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
}
