//! Planar single-integrator agents steered by rotated relative-position
//! measurements.
//!
//! Stacked vectors interleave coordinates agent by agent:
//! `[x_1, y_1, x_2, y_2, ...]`. With `eps^i = p^i - d^i`, one step reads
//!
//! ```text
//! eps_{k+1} = (I - h R^T Lambda) eps_k + h R^T (S (x) I_2) Lambda eps_k
//! ```
//!
//! where `R` stacks the per-agent rotations and `Lambda` removes the common
//! translation.

use std::f64::consts::FRAC_PI_2;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::polytope::{lifted_extremes, min_weight_decomposition};
use crate::signed_graph::{CouplingBounds, SignedDigraph};
use crate::tol;

/// Positions at time `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub positions: Vec<Vector2<f64>>,
    pub time: f64,
    pub step: usize,
}

impl AgentState {
    pub fn new(positions: Vec<Vector2<f64>>, time: f64) -> Result<Self> {
        if positions.iter().any(|p| !p.iter().all(|x| x.is_finite())) || !time.is_finite() {
            return Err(FormationError::InvalidArgument("state coordinates must be finite".into()));
        }
        Ok(Self { positions, time, step: 0 })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.positions)
    }
}

/// Desired positions in the world frame. Coincident entries are allowed; the
/// target shape then degenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    desired: Vec<Vector2<f64>>,
}

impl FormationSpec {
    pub fn new(desired: Vec<Vector2<f64>>) -> Result<Self> {
        if desired.len() < 2 {
            return Err(FormationError::InvalidArgument("a formation needs at least two agents".into()));
        }
        if desired.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(FormationError::InvalidArgument("desired positions must be finite".into()));
        }
        Ok(Self { desired })
    }

    pub fn n(&self) -> usize {
        self.desired.len()
    }

    pub fn desired(&self) -> &[Vector2<f64>] {
        &self.desired
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.desired)
    }
}

pub fn stack(points: &[Vector2<f64>]) -> DVector<f64> {
    DVector::from_iterator(2 * points.len(), points.iter().flat_map(|p| [p.x, p.y]))
}

pub fn unstack(v: &DVector<f64>) -> Vec<Vector2<f64>> {
    v.as_slice().chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

/// Per-agent frame angle as a function of time.
pub trait RotationProfile {
    /// Angle of agent `i` (0-based) at time `t`, in radians.
    fn angle(&self, i: usize, t: f64) -> f64;

    fn angles(&self, n: usize, t: f64) -> Vec<f64> {
        (0..n).map(|i| self.angle(i, t)).collect()
    }
}

impl<F: Fn(usize, f64) -> f64> RotationProfile for F {
    fn angle(&self, i: usize, t: f64) -> f64 {
        self(i, t)
    }
}

/// Indices of angles outside `(-pi/2, pi/2]`. The contraction arguments never
/// use the range, so callers warn rather than fail.
pub fn angles_outside_domain(angles: &[f64]) -> Vec<usize> {
    angles.iter().enumerate().filter(|(_, a)| !(**a > -FRAC_PI_2 && **a <= FRAC_PI_2)).map(|(i, _)| i).collect()
}

/// `cos(theta) I + sin(theta) J` with `J = [[0, -1], [1, 0]]`.
pub fn rotation_matrix(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn block_rotation(angles: &[f64]) -> DMatrix<f64> {
    let n = angles.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (i, &theta) in angles.iter().enumerate() {
        m.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(&rotation_matrix(theta));
    }
    m
}

/// `(I_n - 1 1^T / n) (x) I_2`.
pub fn projection_lambda(n: usize) -> DMatrix<f64> {
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    centering.kronecker(&DMatrix::identity(2, 2))
}

/// Columns are the lifted generators `(e_p - e_q)/2 (x) e_j`, ordered
/// lexicographically in `(p, q, j)`.
pub fn pairwise_difference_matrix(n: usize) -> Result<DMatrix<f64>> {
    Ok(lifted_extremes(n)?.as_matrix())
}

/// `M (x) I_2`.
pub fn lift(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.kronecker(&DMatrix::identity(2, 2))
}

/// Local-frame measurement of agent `j` by agent `i`:
/// `R_i^T (p^j - p^i - (d^j - d^i))`.
pub fn sensed_displacement(state: &AgentState, spec: &FormationSpec, theta_i: f64, i: usize, j: usize) -> Vector2<f64> {
    debug_assert_ne!(i, j);
    let rel = state.positions[j] - state.positions[i] - (spec.desired[j] - spec.desired[i]);
    rotation_matrix(theta_i).transpose() * rel
}

/// `u^i = sum_j a^{ij} xi^{ji}` over the in-neighbors of `i`, angles taken at `t`.
pub fn control_input(
    i: usize,
    state: &AgentState,
    graph: &SignedDigraph,
    spec: &FormationSpec,
    profile: &dyn RotationProfile,
    t: f64,
) -> Vector2<f64> {
    let theta = profile.angle(i, t);
    graph
        .in_neighbors(i)
        .map(|(j, a)| a * sensed_displacement(state, spec, theta, i, j))
        .fold(Vector2::zeros(), |acc, v| acc + v)
}

/// Forward-difference step `p^i_{k+1} = p^i_k + h u^i_k`, agent by agent.
pub fn step_agentwise(
    state: &AgentState,
    h: f64,
    graph: &SignedDigraph,
    spec: &FormationSpec,
    profile: &dyn RotationProfile,
) -> AgentState {
    let positions = (0..state.n())
        .map(|i| state.positions[i] + h * control_input(i, state, graph, spec, profile, state.time))
        .collect();
    AgentState { positions, time: state.time + h, step: state.step + 1 }
}

/// One step of the stacked error system.
pub fn step_vectorized(eps: &DVector<f64>, h: f64, graph: &SignedDigraph, angles: &[f64]) -> DVector<f64> {
    let n = graph.n();
    let r_t = block_rotation(angles).transpose();
    let lambda = projection_lambda(n);
    let s = lift(graph.stochastic_unchecked().matrix());
    let projected = &lambda * eps;
    eps - h * (&r_t * &projected) + h * (&r_t * (s * projected))
}

/// Per-step contraction certificate: the columns of
/// `(I - h (L^T (x) I_2) R) E` decomposed over the lifted generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma6Certificate {
    pub step: usize,
    pub column_sums: Vec<f64>,
    pub max_column_sum: f64,
    /// `1 - (1 - eta) h`.
    pub bound: f64,
    pub max_residual: f64,
    pub pass: bool,
}

impl Lemma6Certificate {
    pub fn slack(&self) -> f64 {
        self.bound - self.max_column_sum
    }
}

/// Evaluates the certificate without checking the graph or step hypotheses.
pub fn lemma6_columns(
    graph: &SignedDigraph,
    angles: &[f64],
    h: f64,
    eta: f64,
    step: usize,
) -> Result<Lemma6Certificate> {
    let n = graph.n();
    if angles.len() != n {
        return Err(FormationError::InvalidArgument(format!("{} angles for {n} agents", angles.len())));
    }
    let gens = lifted_extremes(n)?;
    let e = gens.as_matrix();
    let r = block_rotation(angles);
    let lt = lift(&graph.laplacian().transpose());
    let map = DMatrix::identity(2 * n, 2 * n) - h * lt * r;
    let images = map * e;
    let mut column_sums = Vec::with_capacity(images.ncols());
    let mut max_residual = 0.0_f64;
    for col in images.column_iter() {
        let cert = min_weight_decomposition(&col.into_owned(), &gens)?;
        max_residual = max_residual.max(cert.residual);
        column_sums.push(cert.weight_sum);
    }
    let max_column_sum = column_sums.iter().copied().fold(0.0, f64::max);
    let bound = 1.0 - (1.0 - eta) * h;
    let pass = max_column_sum <= bound + tol::INEQ_SLACK && max_residual <= tol::INEQ_SLACK;
    Ok(Lemma6Certificate { step, column_sums, max_column_sum, bound, max_residual, pass })
}

/// Checked certificate: the graph must be coupling-valid and neighbor-shared
/// and `h` must lie in `window`. A failing certificate is an error.
pub fn lemma6_certificate(
    graph: &SignedDigraph,
    angles: &[f64],
    h: f64,
    bounds: &CouplingBounds,
    window: RangeInclusive<f64>,
    step: usize,
) -> Result<Lemma6Certificate> {
    let report = graph.validate_coupling(bounds);
    if !report.pass() {
        return Err(FormationError::HypothesisViolation(format!("coupling bounds violated: {:?}", report.violations)));
    }
    if let Some((p, q)) = graph.unshared_pair() {
        return Err(FormationError::HypothesisViolation(format!(
            "graph is not neighbor shared: vertices {} and {} have no common positive in-neighbor",
            p + 1,
            q + 1
        )));
    }
    if !(h >= window.start() - tol::INEQ_SLACK && h <= window.end() + tol::INEQ_SLACK) {
        return Err(FormationError::HypothesisViolation(format!(
            "step {h} outside the admissible window [{}, {}]",
            window.start(),
            window.end()
        )));
    }
    let cert = lemma6_columns(graph, angles, h, bounds.eta(), step)?;
    if cert.pass {
        Ok(cert)
    } else {
        Err(FormationError::CertificateFailure { step, max_column_sum: cert.max_column_sum, bound: cert.bound })
    }
}

/// `|E^T eps|_inf`: half the largest pairwise coordinate disagreement.
pub fn pairwise_error_inf(eps: &DVector<f64>) -> f64 {
    let n = eps.len() / 2;
    let mut best = 0.0_f64;
    for j in 0..2 {
        let (lo, hi) = (0..n)
            .map(|i| eps[2 * i + j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        best = best.max(0.5 * (hi - lo));
    }
    best
}
