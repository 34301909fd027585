//! Brute-force vertex enumeration of `{x in R^n : |x|_1 <= 1, <1, x> = 0}`.
//!
//! The ball is written in H-form as `<a, x> <= 1` for all `a in {-1, 1}^n`.
//! A vertex of the section is a feasible point where `n - 1` independent
//! inequalities are tight together with the equality. Every such subset is
//! tried, which is why the dimension is capped. This is a test oracle only and
//! shares no code with the constructive generator lists.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::ExtremeSet;
use crate::error::{FormationError, Result};

pub const ORACLE_MAX_DIM: usize = 6;

const SINGULAR_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-9;

pub fn section_vertices_oracle(n: usize) -> Result<ExtremeSet> {
    if n > ORACLE_MAX_DIM {
        return Err(FormationError::DimensionTooLarge { n, max: ORACLE_MAX_DIM });
    }
    if n < 2 {
        return Err(FormationError::InvalidArgument("oracle needs n >= 2".into()));
    }
    ExtremeSet::new(n, enumerate(n))
}

fn sign_vectors(n: usize) -> Vec<DVector<f64>> {
    (0..1usize << n).map(|mask| DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })).collect()
}

fn vertex_for(rows: &[DVector<f64>], subset: &[usize]) -> Option<DVector<f64>> {
    let n = rows[0].len();
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (r, &idx) in subset.iter().enumerate() {
        m.set_row(r, &rows[idx].transpose());
        rhs[r] = 1.0;
    }
    m.set_row(n - 1, &DVector::from_element(n, 1.0).transpose());
    let lu = m.lu();
    if lu.determinant().abs() < SINGULAR_TOL {
        return None;
    }
    let x = lu.solve(&rhs)?;
    let feasible = rows.iter().all(|a| a.dot(&x) <= 1.0 + FEAS_TOL) && x.sum().abs() <= FEAS_TOL;
    feasible.then_some(x)
}

fn enumerate(n: usize) -> Vec<DVector<f64>> {
    let rows = sign_vectors(n);
    let m = rows.len();
    let found: Vec<DVector<f64>> = (0..m)
        .into_par_iter()
        .flat_map_iter(|first| {
            let rows = &rows;
            (first + 1..m).combinations(n - 2).filter_map(move |rest| {
                let mut subset = Vec::with_capacity(n - 1);
                subset.push(first);
                subset.extend(rest);
                vertex_for(rows, &subset)
            })
        })
        .collect();

    let mut unique: Vec<DVector<f64>> = Vec::new();
    for x in found {
        if !unique.iter().any(|u| (u - &x).amax() <= DEDUP_TOL) {
            unique.push(x);
        }
    }
    unique.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).expect("finite vertices"));
    unique
}
