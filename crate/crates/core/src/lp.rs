//! Dense two-phase simplex for small standard-form programs
//!
//! ```text
//! minimize c^T x  subject to  A x = b,  x >= 0
//! ```
//!
//! Pivoting follows Bland's rule (lowest eligible index enters, ties on the
//! ratio test leave by lowest basic index), so the method terminates on
//! degenerate problems. Sizes here are at most a few hundred columns, so the
//! full tableau is kept in a single row-major buffer.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Entries below this magnitude are never used as pivots.
const PIVOT_TOL: f64 = 1e-11;
/// Reduced costs above `-COST_TOL` count as optimal.
const COST_TOL: f64 = 1e-12;
/// Phase-one objective above this (relative to `1 + |b|_1`) means infeasible.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("objective unbounded below")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    rows: usize,
    cols: usize, // structural + artificial + rhs
    data: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let p = self.at(pr, pc);
        for c in 0..cols {
            self.data[pr * cols + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            for c in 0..cols {
                let v = self.data[pr * cols + c];
                self.data[r * cols + c] -= f * v;
            }
        }
        self.basis[pr] = pc;
    }

    fn reduced_cost(&self, cost: &[f64], c: usize) -> f64 {
        let mut z = 0.0;
        for r in 0..self.rows {
            z += cost[self.basis[r]] * self.at(r, c);
        }
        cost[c] - z
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        (0..self.rows).map(|r| cost[self.basis[r]] * self.rhs(r)).sum()
    }

    /// Runs Bland-rule simplex over the columns `0..allowed` with the given
    /// cost vector (indexed over all non-rhs columns).
    fn optimize(&mut self, cost: &[f64], allowed: usize, budget: &mut usize) -> Result<(), LpError> {
        loop {
            let entering =
                (0..allowed).filter(|c| !self.basis.contains(c)).find(|&c| self.reduced_cost(cost, c) < -COST_TOL);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-15 || (ratio <= bratio + 1e-15 && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            if *budget == 0 {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            *budget -= 1;
            self.pivot(pr, pc);
        }
    }
}

const MAX_ITERATIONS: usize = 50_000;

/// Solves `min c^T x` s.t. `A x = b`, `x >= 0`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<LpSolution, LpError> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(LpError::Dimension(format!("A is {m}x{n}, b has {}, c has {}", b.len(), c.len())));
    }
    let cols = n + m + 1;
    let mut data = vec![0.0; m * cols];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[r * cols + j] = sign * a[(r, j)];
        }
        data[r * cols + n + r] = 1.0;
        data[r * cols + cols - 1] = sign * b[r];
    }
    let mut t = Tableau { rows: m, cols, data, basis: (n..n + m).collect(), n_struct: n };
    let mut budget = MAX_ITERATIONS;

    // phase one: minimize the sum of artificials
    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|x| *x = 1.0);
    t.optimize(&phase1, n + m, &mut budget)?;
    let residual = t.objective(&phase1);
    let scale = 1.0 + b.iter().map(|x| x.abs()).sum::<f64>();
    if residual > FEAS_TOL * scale {
        return Err(LpError::Infeasible { residual });
    }

    // drive zero-level artificials out of the basis; rows where that is
    // impossible are redundant and get dropped
    let mut r = 0;
    while r < t.rows {
        if t.basis[r] >= t.n_struct {
            if let Some(pc) = (0..t.n_struct).find(|&c| t.at(r, c).abs() > PIVOT_TOL && !t.basis.contains(&c)) {
                t.pivot(r, pc);
                r += 1;
            } else {
                let cols = t.cols;
                t.data.drain(r * cols..(r + 1) * cols);
                t.basis.remove(r);
                t.rows -= 1;
            }
        } else {
            r += 1;
        }
    }

    // phase two over structural columns only
    let mut cost = vec![0.0; n + m];
    cost[..n].copy_from_slice(c.as_slice());
    t.optimize(&cost, n, &mut budget)?;

    let mut x = DVector::zeros(n);
    for (row, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rhs(row).max(0.0);
        }
    }
    let objective = c.dot(&x);
    Ok(LpSolution { x, objective, iterations: MAX_ITERATIONS - budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simple_two_variable() {
        // min -x0 - x1  s.t. x0 + 2 x1 + s0 = 4, 3 x0 + x1 + s1 = 6
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![4.0, 6.0]);
        let c = DVector::from_vec(vec![-1.0, -1.0, 0.0, 0.0]);
        let sol = solve(&a, &b, &c).unwrap();
        assert_abs_diff_eq!(sol.objective, -2.8, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 1.2, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        // x0 = -1 with x0 >= 0
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DVector::from_vec(vec![-1.0]);
        let c = DVector::from_vec(vec![1.0]);
        assert!(matches!(solve(&a, &b, &c), Err(LpError::Infeasible { .. })));
    }

    #[test]
    fn unbounded_detected() {
        // min -x0 s.t. x0 - x1 = 0
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![0.0]);
        let c = DVector::from_vec(vec![-1.0, 0.0]);
        assert_eq!(solve(&a, &b, &c), Err(LpError::Unbounded));
    }

    #[test]
    fn redundant_rows_are_dropped() {
        // second row duplicates the first
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let c = DVector::from_vec(vec![3.0, 1.0, 2.0]);
        let sol = solve(&a, &b, &c).unwrap();
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling example, in equality form with slacks.
        let a = DMatrix::from_row_slice(
            3,
            7,
            &[
                0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0, //
                0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let c = DVector::from_vec(vec![-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0]);
        let sol = solve(&a, &b, &c).unwrap();
        assert_abs_diff_eq!(sol.objective, -1.25, epsilon = 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let a = DMatrix::zeros(2, 2);
        assert!(matches!(solve(&a, &DVector::zeros(3), &DVector::zeros(2)), Err(LpError::Dimension(_))));
    }
}
