//! Signed directed interaction graphs and the matrices derived from them.
//!
//! Conventions:
//! - `a^{ij} != 0` iff there is an edge `j -> i`, read as "agent `i` senses
//!   agent `j`". The neighbor set of `i` is its in-neighbor set.
//! - The Laplacian has `l^{ij} = -a^{ij}` off the diagonal and
//!   `l^{ii} = sum_j a^{ij}`, so every row sums to zero.
//! - Vertex indices are 0-based in the API and 1-based in the serialized form.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::tol;

/// Weighted signed edge `source -> target` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDigraph {
    n: usize,
    edges: Vec<Edge>,
}

impl SignedDigraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        if n == 0 {
            return Err(FormationError::InvalidGraph("graph needs at least one vertex".into()));
        }
        let mut seen = vec![false; n * n];
        let mut out = Vec::new();
        for e in edges {
            if e.source >= n || e.target >= n {
                return Err(FormationError::InvalidGraph(format!(
                    "edge {}->{} references a vertex outside 0..{n}",
                    e.source, e.target
                )));
            }
            if e.source == e.target {
                return Err(FormationError::InvalidGraph(format!("self-loop at vertex {}", e.source)));
            }
            if !e.weight.is_finite() || e.weight == 0.0 {
                return Err(FormationError::InvalidGraph(format!(
                    "edge {}->{} has weight {}; weights must be finite and nonzero",
                    e.source, e.target, e.weight
                )));
            }
            let slot = e.target * n + e.source;
            if seen[slot] {
                return Err(FormationError::InvalidGraph(format!("duplicate edge {}->{}", e.source, e.target)));
            }
            seen[slot] = true;
            out.push(e);
        }
        Ok(Self { n, edges: out })
    }

    /// Graph without edges.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, [])
    }

    /// Builds a graph from 1-based `(source, target, weight)` triples.
    pub fn from_one_based(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(triples.len());
        for &(s, t, w) in triples {
            if s == 0 || t == 0 {
                return Err(FormationError::InvalidGraph(format!("edge ({s}, {t}): vertex indices are 1-based")));
            }
            edges.push(Edge { source: s - 1, target: t - 1, weight: w });
        }
        Self::new(n, edges)
    }

    /// Recovers the graph whose stochastic matrix is `s` (off-diagonal entries
    /// are the edge weights).
    pub fn from_stochastic(s: &GeneralStochasticMatrix) -> Result<Self> {
        let m = s.matrix();
        let n = m.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] != 0.0 {
                    edges.push(Edge { source: j, target: i, weight: m[(i, j)] });
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Coupling coefficient `a^{ij}` (agent `i` senses agent `j`), zero if absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.edges.iter().find(|e| e.target == i && e.source == j).map_or(0.0, |e| e.weight)
    }

    /// In-neighbors of `i` with their weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges.iter().filter(move |e| e.target == i).map(|e| (e.source, e.weight))
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.target, e.source)] = e.weight;
        }
        a
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let a = self.adjacency_matrix();
        let mut l = -&a;
        for i in 0..self.n {
            l[(i, i)] = a.row(i).sum();
        }
        l
    }

    /// `I - L` without any hypothesis check.
    pub fn stochastic_unchecked(&self) -> GeneralStochasticMatrix {
        GeneralStochasticMatrix(DMatrix::identity(self.n, self.n) - self.laplacian())
    }

    /// `S = I - L`, required to lie in `S_beta` and to satisfy the coupling bounds.
    pub fn stochastic(&self, bounds: &CouplingBounds) -> Result<GeneralStochasticMatrix> {
        let mut clauses = self.validate_coupling(bounds).violations;
        let s = self.stochastic_unchecked();
        for i in 0..self.n {
            let neg = s.negative_mass(i);
            if neg < -bounds.beta - tol::INEQ_SLACK {
                clauses.push(CouplingClause::OutsideSBeta { vertex: i, negative_mass: neg });
            }
        }
        if clauses.is_empty() {
            Ok(s)
        } else {
            Err(FormationError::CouplingViolation(clauses))
        }
    }

    /// Checks the coupling constraints vertex by vertex. A vertex without
    /// positive (resp. negative) in-edges is exempt from the positive-sum
    /// (resp. negative-sum) clause.
    pub fn validate_coupling(&self, bounds: &CouplingBounds) -> CouplingReport {
        let CouplingBounds { alpha, beta } = *bounds;
        let slack = tol::INEQ_SLACK;
        let mut violations = Vec::new();
        for i in 0..self.n {
            let mut pos_sum = 0.0;
            let mut neg_sum = 0.0;
            let mut has_pos = false;
            let mut has_neg = false;
            for (j, w) in self.in_neighbors(i) {
                if w > 0.0 {
                    has_pos = true;
                    pos_sum += w;
                    if w < alpha - slack || w >= 1.0 {
                        violations.push(CouplingClause::PositiveWeight { vertex: i, source: j, weight: w });
                    }
                } else {
                    has_neg = true;
                    neg_sum += w;
                }
            }
            if has_pos && (pos_sum < alpha - slack || pos_sum > 1.0 - alpha + slack) {
                violations.push(CouplingClause::PositiveSum { vertex: i, sum: pos_sum });
            }
            if has_neg && (neg_sum < -beta - slack || neg_sum >= 0.0) {
                violations.push(CouplingClause::NegativeSum { vertex: i, sum: neg_sum });
            }
        }
        CouplingReport { violations }
    }

    /// Every ordered pair of distinct vertices `p, q` has a common positive
    /// in-neighbor `i` distinct from both.
    pub fn is_neighbor_shared(&self) -> bool {
        self.unshared_pair().is_none()
    }

    /// First pair `(p, q)` without a shared positive in-neighbor.
    pub fn unshared_pair(&self) -> Option<(usize, usize)> {
        let a = self.adjacency_matrix();
        for p in 0..self.n {
            for q in (p + 1)..self.n {
                let shared = (0..self.n).any(|i| i != p && i != q && a[(p, i)] > 0.0 && a[(q, i)] > 0.0);
                if !shared {
                    return Some((p, q));
                }
            }
        }
        None
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc { n: self.n, edges: self.edges.iter().map(|e| (e.source + 1, e.target + 1, e.weight)).collect() }
    }
}

/// Serialized graph: `n` and 1-based `[source, target, weight]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<&GraphDoc> for SignedDigraph {
    type Error = FormationError;

    fn try_from(doc: &GraphDoc) -> Result<Self> {
        SignedDigraph::from_one_based(doc.n, &doc.edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingBounds {
    pub alpha: f64,
    pub beta: f64,
}

impl CouplingBounds {
    /// Requires `0 < alpha <= 1/2` and `0 <= beta < alpha/2`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(FormationError::InvalidBounds(format!("alpha = {alpha} is outside (0, 1/2]")));
        }
        if !(beta >= 0.0 && beta < alpha / 2.0) {
            return Err(FormationError::InvalidBounds(format!(
                "beta = {beta} is outside [0, alpha/2) = [0, {})",
                alpha / 2.0
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Guaranteed contraction factor `1 - alpha + 2 beta`.
    pub fn eta(&self) -> f64 {
        1.0 - self.alpha + 2.0 * self.beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CouplingClause {
    /// A positive weight outside `[alpha, 1)`.
    PositiveWeight { vertex: usize, source: usize, weight: f64 },
    /// Sum of positive in-weights outside `[alpha, 1 - alpha]`.
    PositiveSum { vertex: usize, sum: f64 },
    /// Sum of negative in-weights outside `[-beta, 0)`.
    NegativeSum { vertex: usize, sum: f64 },
    /// Row of `S` with negative mass below `-beta`.
    OutsideSBeta { vertex: usize, negative_mass: f64 },
}

impl fmt::Display for CouplingClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PositiveWeight { vertex, source, weight } => {
                write!(f, "vertex {}: positive weight {weight} from {} outside [alpha, 1)", vertex + 1, source + 1)
            }
            Self::PositiveSum { vertex, sum } => {
                write!(f, "vertex {}: positive in-weight sum {sum} outside [alpha, 1-alpha]", vertex + 1)
            }
            Self::NegativeSum { vertex, sum } => {
                write!(f, "vertex {}: negative in-weight sum {sum} outside [-beta, 0)", vertex + 1)
            }
            Self::OutsideSBeta { vertex, negative_mass } => {
                write!(f, "row {}: negative mass {negative_mass} below -beta", vertex + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub violations: Vec<CouplingClause>,
}

impl CouplingReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Square matrix with unit row sums; entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralStochasticMatrix(DMatrix<f64>);

impl GeneralStochasticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(FormationError::NotStochastic(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(FormationError::NotStochastic("non-finite entry".into()));
        }
        for (i, row) in m.row_iter().enumerate() {
            let sum = row.sum();
            if (sum - 1.0).abs() > tol::ROW_SUM {
                return Err(FormationError::NotStochastic(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `sum_j min(s^{ij}, 0)`.
    pub fn negative_mass(&self, i: usize) -> f64 {
        self.0.row(i).iter().map(|&x| x.min(0.0)).sum()
    }

    pub fn in_s_beta(&self, beta: f64) -> bool {
        (0..self.n()).all(|i| self.negative_mass(i) >= -beta - tol::INEQ_SLACK)
    }

    /// `max_{p,q} (1/2) sum_i |s^{pi} - s^{qi}|`.
    pub fn ergodic_coefficient(&self) -> f64 {
        let n = self.n();
        let mut best = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let d: f64 = (0..n).map(|i| (self.0[(p, i)] - self.0[(q, i)]).abs()).sum();
                best = best.max(0.5 * d);
            }
        }
        best
    }

    /// `min_{p != q} sum_i min(s^{pi}, s^{qi})`; 1 for a single row.
    pub fn shared_weight_margin(&self) -> f64 {
        let n = self.n();
        let mut best = f64::INFINITY;
        for p in 0..n {
            for q in (p + 1)..n {
                let m: f64 = (0..n).map(|i| self.0[(p, i)].min(self.0[(q, i)])).sum();
                best = best.min(m);
            }
        }
        if best.is_finite() {
            best
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bounds() -> CouplingBounds {
        CouplingBounds::new(0.2, 0.08).unwrap()
    }

    #[test]
    fn empty_graph_matrices() {
        let g = SignedDigraph::empty(3).unwrap();
        assert_eq!(g.adjacency_matrix(), DMatrix::zeros(3, 3));
        assert_eq!(g.laplacian(), DMatrix::zeros(3, 3));
        let s = g.stochastic(&bounds()).unwrap();
        assert_eq!(s.matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn adjacency_row_transcription() {
        let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, -0.08)]).unwrap();
        let a = g.adjacency_matrix();
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.2, -0.08]);
        assert_eq!(a.row(1).sum(), 0.0);
    }

    #[test]
    fn laplacian_row_one() {
        let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, -0.08)]).unwrap();
        let l = g.laplacian();
        assert_abs_diff_eq!(l[(0, 0)], 0.12, epsilon = 1e-15);
        assert_eq!(l[(0, 1)], -0.2);
        assert_eq!(l[(0, 2)], 0.08);
        // oracle: I - L has unit row sums
        let s = DMatrix::identity(3, 3) - &l;
        for r in s.row_iter() {
            assert_abs_diff_eq!(r.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(SignedDigraph::from_one_based(2, &[(1, 1, 0.2)]).is_err());
        assert!(SignedDigraph::from_one_based(2, &[(1, 2, 0.2), (1, 2, 0.3)]).is_err());
        assert!(SignedDigraph::from_one_based(2, &[(1, 2, 0.0)]).is_err());
        assert!(SignedDigraph::from_one_based(2, &[(1, 3, 0.2)]).is_err());
        assert!(SignedDigraph::from_one_based(2, &[(0, 1, 0.2)]).is_err());
        assert!(SignedDigraph::empty(0).is_err());
    }

    #[test]
    fn coupling_bounds_domain() {
        assert!(CouplingBounds::new(0.2, 0.08).is_ok());
        assert!(CouplingBounds::new(0.5, 0.0).is_ok());
        assert!(CouplingBounds::new(0.2, 0.1).is_err());
        assert!(CouplingBounds::new(0.2, 0.15).is_err());
        assert!(CouplingBounds::new(0.0, 0.0).is_err());
        assert!(CouplingBounds::new(0.6, 0.0).is_err());
        assert!(CouplingBounds::new(0.2, -0.01).is_err());
    }

    #[test]
    fn validate_coupling_clauses() {
        let b = bounds();
        // two positive in-weights 0.2 + 0.2
        let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, 0.2)]).unwrap();
        assert!(g.validate_coupling(&b).pass());
        // weight below alpha
        let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.1), (3, 1, 0.2)]).unwrap();
        let r = g.validate_coupling(&b);
        assert!(r.violations.iter().any(|c| matches!(c, CouplingClause::PositiveWeight { vertex: 0, source: 1, .. })));
        // negative weight at the edge of [-beta, 0)
        let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, -0.08)]).unwrap();
        assert!(g.validate_coupling(&b).pass());
        // negative sum -0.15 under beta 0.08
        let g = SignedDigraph::from_one_based(4, &[(2, 1, 0.4), (3, 1, -0.1), (4, 1, -0.05)]).unwrap();
        assert!(!g.validate_coupling(&b).pass());
        assert!(matches!(g.stochastic(&b), Err(FormationError::CouplingViolation(_))));
        // positive sum above 1 - alpha
        let g = SignedDigraph::from_one_based(4, &[(2, 1, 0.3), (3, 1, 0.3), (4, 1, 0.3)]).unwrap();
        assert!(g
            .validate_coupling(&b)
            .violations
            .iter()
            .any(|c| matches!(c, CouplingClause::PositiveSum { vertex: 0, .. })));
    }

    #[test]
    fn neighbor_shared_small_cases() {
        let complete = SignedDigraph::from_one_based(
            3,
            &[(1, 2, 0.2), (1, 3, 0.2), (2, 1, 0.2), (2, 3, 0.2), (3, 1, 0.2), (3, 2, 0.2)],
        )
        .unwrap();
        assert!(complete.is_neighbor_shared());
        let cycle = SignedDigraph::from_one_based(3, &[(1, 2, 0.2), (2, 3, 0.2), (3, 1, 0.2)]).unwrap();
        assert!(!cycle.is_neighbor_shared());
        // negative edges never count as shared
        let neg = SignedDigraph::from_one_based(
            3,
            &[(1, 2, -0.02), (1, 3, 0.2), (2, 1, 0.2), (2, 3, 0.2), (3, 1, 0.2), (3, 2, 0.2)],
        )
        .unwrap();
        assert!(!neg.is_neighbor_shared());
        assert!(!SignedDigraph::empty(2).unwrap().is_neighbor_shared());
    }

    #[test]
    fn ergodic_coefficient_and_margin_basics() {
        let avg = GeneralStochasticMatrix::new(DMatrix::from_element(4, 4, 0.25)).unwrap();
        assert_abs_diff_eq!(avg.ergodic_coefficient(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(avg.shared_weight_margin(), 1.0, epsilon = 1e-15);
        let id = GeneralStochasticMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.ergodic_coefficient(), 1.0);
        assert_eq!(id.shared_weight_margin(), 0.0);
    }

    #[test]
    fn stochastic_rejects_bad_rows() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.1;
        assert!(matches!(GeneralStochasticMatrix::new(m), Err(FormationError::NotStochastic(_))));
        assert!(GeneralStochasticMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn from_stochastic_recovers_graph() {
        let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, -0.08), (1, 3, 0.3)]).unwrap();
        let s = g.stochastic_unchecked();
        let back = SignedDigraph::from_stochastic(&s).unwrap();
        assert_eq!(back.adjacency_matrix(), g.adjacency_matrix());
    }
}
