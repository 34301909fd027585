//! Crosspolytopes, their zero-sum sections, and convex-combination membership.
//!
//! The section polytope `{x : |x|_1 <= 1, <1, x> = 0}` has the scaled basis
//! differences `(e_p - e_q)/2` as vertices. The lifted version in `R^{2n}`
//! stacks planar coordinates agent by agent (`x = [x_1, y_1, x_2, y_2, ...]`)
//! and requires both coordinate sums to vanish.

mod lemmas;
mod oracle;

pub use lemmas::{
    check_lemma3, check_lemma4, check_lemma5, check_prop3, check_prop4, prop3_report, Hypotheses, LemmaId, LemmaReport,
    SamplingPlan, DEFAULT_SEED,
};
pub use oracle::{section_vertices_oracle, ORACLE_MAX_DIM};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{FormationError, Result};
use crate::lp::{self, LpError};
use crate::tol;

/// Finite generator set of a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeSet {
    dim: usize,
    points: Vec<DVector<f64>>,
}

impl ExtremeSet {
    /// Builds a set from explicit points, rejecting dimension mismatches and
    /// exact duplicates.
    pub fn new(dim: usize, points: Vec<DVector<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(FormationError::InvalidArgument("dimension must be positive".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(FormationError::InvalidArgument(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if points[..i].iter().any(|q| q == p) {
                return Err(FormationError::InvalidArgument(format!("point {i} is a duplicate")));
            }
        }
        Ok(Self { dim, points })
    }

    /// From integer points in units of one half; exact, so no tolerance is
    /// needed to keep the set duplicate-free.
    fn from_halves(dim: usize, halves: Vec<Vec<i8>>) -> Self {
        debug_assert!({
            let mut sorted = halves.clone();
            sorted.sort();
            sorted.dedup();
            sorted.len() == halves.len()
        });
        let points = halves
            .into_iter()
            .map(|h| DVector::from_iterator(dim, h.into_iter().map(|v| f64::from(v) * 0.5)))
            .collect();
        Self { dim, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// Generators as the columns of a `dim x len` matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.points)
    }

    pub fn contains_point(&self, x: &DVector<f64>, eps: f64) -> bool {
        self.points.iter().any(|p| (p - x).amax() <= eps)
    }

    /// Whether `-g` belongs to the set for every generator `g`.
    pub fn is_negation_closed(&self) -> bool {
        self.points.iter().all(|p| self.contains_point(&-p, 0.0))
    }

    /// Same points up to `eps` in the max norm, ignoring order.
    pub fn same_points(&self, other: &ExtremeSet, eps: f64) -> bool {
        self.dim == other.dim
            && self.len() == other.len()
            && self.points.iter().all(|p| other.contains_point(p, eps))
            && other.points.iter().all(|p| self.contains_point(p, eps))
    }
}

/// The `2n` signed unit vectors.
pub fn cross_extremes(n: usize) -> Result<ExtremeSet> {
    if n == 0 {
        return Err(FormationError::InvalidArgument("n must be at least 1".into()));
    }
    let mut halves = Vec::with_capacity(2 * n);
    for i in 0..n {
        for s in [2i8, -2] {
            let mut v = vec![0i8; n];
            v[i] = s;
            halves.push(v);
        }
    }
    Ok(ExtremeSet::from_halves(n, halves))
}

/// Index pairs `(p, q)`, `p != q`, in lexicographic order.
pub fn ordered_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
}

/// `(e_p - e_q)/2` for all ordered pairs, lexicographic in `(p, q)`.
pub fn section_extremes(n: usize) -> Result<ExtremeSet> {
    if n < 2 {
        return Err(FormationError::InvalidArgument("section polytope needs n >= 2".into()));
    }
    let halves = ordered_pairs(n)
        .map(|(p, q)| {
            let mut v = vec![0i8; n];
            v[p] = 1;
            v[q] = -1;
            v
        })
        .collect();
    Ok(ExtremeSet::from_halves(n, halves))
}

/// `(e_p - e_q)/2 (x) e_j` in `R^{2n}`, lexicographic in `(p, q, j)`.
pub fn lifted_extremes(n: usize) -> Result<ExtremeSet> {
    if n < 2 {
        return Err(FormationError::InvalidArgument("lifted section polytope needs n >= 2".into()));
    }
    let mut halves = Vec::with_capacity(2 * n * (n - 1));
    for (p, q) in ordered_pairs(n) {
        for j in 0..2 {
            let mut v = vec![0i8; 2 * n];
            v[2 * p + j] = 1;
            v[2 * q + j] = -1;
            halves.push(v);
        }
    }
    Ok(ExtremeSet::from_halves(2 * n, halves))
}

/// `|x|_1 <= radius` up to the inequality slack.
pub fn l1_membership(x: &DVector<f64>, radius: f64) -> bool {
    x.lp_norm(1) <= radius + tol::INEQ_SLACK
}

/// Membership in the polar of the crosspolytope. Evaluated both against the
/// crosspolytope vertices and as `|x|_inf <= 1`; the two must agree.
pub fn polar_membership(x: &DVector<f64>) -> bool {
    let (by_vertices, by_norm) = polar_membership_both(x);
    assert_eq!(by_vertices, by_norm, "polar membership tests disagree for {x:?}");
    by_norm
}

/// `(vertex inner-product test, sup-norm test)`.
pub fn polar_membership_both(x: &DVector<f64>) -> (bool, bool) {
    let bound = 1.0 + tol::INEQ_SLACK;
    let by_vertices =
        cross_extremes(x.len().max(1)).map(|v| v.points().iter().all(|e| x.dot(e) <= bound)).unwrap_or(true);
    let by_norm = x.amax() <= bound;
    (by_vertices, by_norm)
}

/// Largest violation of the two lifted hyperplane constraints
/// `<1_n (x) e_j, x> = 0`.
pub fn lifted_hyperplane_residual(x: &DVector<f64>) -> f64 {
    let mut sums = [0.0; 2];
    for (k, v) in x.iter().enumerate() {
        sums[k % 2] += v;
    }
    sums[0].abs().max(sums[1].abs())
}

/// Nonnegative representation of a point over a generator set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipCertificate {
    pub point: Vec<f64>,
    pub generator_weights: Vec<f64>,
    pub weight_sum: f64,
    /// Max-norm reconstruction error.
    pub residual: f64,
}

/// Minimizes the total weight of a nonnegative combination of `gens` equal to
/// `x`. For negation-closed generators, `weight_sum <= 1` certifies
/// `x in conv(gens)`.
pub fn min_weight_decomposition(x: &DVector<f64>, gens: &ExtremeSet) -> Result<MembershipCertificate> {
    min_weight_combination(x, &gens.as_matrix())
}

/// Same LP over the columns of an arbitrary matrix.
pub fn min_weight_combination(x: &DVector<f64>, columns: &DMatrix<f64>) -> Result<MembershipCertificate> {
    if columns.nrows() != x.len() {
        return Err(FormationError::InvalidArgument(format!(
            "point has dimension {}, generators have {}",
            x.len(),
            columns.nrows()
        )));
    }
    let cost = DVector::from_element(columns.ncols(), 1.0);
    let sol = lp::solve(columns, x, &cost).map_err(|e| match e {
        LpError::Infeasible { residual } => FormationError::Infeasible { residual },
        other => FormationError::Lp(other),
    })?;
    let residual = (columns * &sol.x - x).amax();
    if residual > tol::INEQ_SLACK {
        return Err(FormationError::Infeasible { residual });
    }
    Ok(MembershipCertificate {
        point: x.iter().copied().collect(),
        weight_sum: sol.x.sum(),
        generator_weights: sol.x.iter().copied().collect(),
        residual,
    })
}
