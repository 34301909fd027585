//! Seeded random draws used by the lemma suites, the randomized tests and
//! the uniform-step policy.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::polytope::ExtremeSet;
use crate::signed_graph::{CouplingBounds, Edge, SignedDigraph};

pub type SuiteRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SuiteRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform weights on the `k`-simplex (flat Dirichlet).
pub fn simplex_weights<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Dirichlet-weighted convex combination of the generators.
pub fn sample_in_hull<R: Rng + ?Sized>(rng: &mut R, gens: &ExtremeSet) -> DVector<f64> {
    let w = simplex_weights(rng, gens.len());
    let mut x = DVector::zeros(gens.dim());
    for (wi, g) in w.iter().zip(gens.points()) {
        x.axpy(*wi, g, 1.0);
    }
    x
}

/// Angles drawn uniformly from `(-pi/2, pi/2]`.
pub fn random_angles<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            // (0, 1] mapped onto (-pi/2, pi/2]
            let u: f64 = 1.0 - rng.random::<f64>();
            -FRAC_PI_2 + u * std::f64::consts::PI
        })
        .collect()
}

/// Largest number of positive in-edges one vertex can carry: each weighs at
/// least `alpha` and together at most `1 - alpha`.
pub fn max_positive_in_degree(n: usize, bounds: &CouplingBounds) -> usize {
    let k = ((1.0 - bounds.alpha) / bounds.alpha + 1e-12).floor() as usize;
    k.min(n.saturating_sub(1))
}

/// A neighbor-shared graph needs every vertex to have two positive
/// in-neighbors (a vertex whose only positive in-neighbor is `i` cannot share
/// one with `i`), so the admissible set is empty when fewer fit.
pub fn admissible_set_is_empty(n: usize, bounds: &CouplingBounds) -> bool {
    n < 3 || max_positive_in_degree(n, bounds) < 2
}

/// Draws a neighbor-shared graph satisfying the coupling bounds by rejection.
/// Returns `None` when the admissible set is empty or no draw succeeded
/// within `max_attempts`.
pub fn random_admissible_graph<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    bounds: &CouplingBounds,
    max_attempts: usize,
) -> Option<SignedDigraph> {
    if admissible_set_is_empty(n, bounds) {
        return None;
    }
    (0..max_attempts).find_map(|_| {
        let g = random_coupled_graph(rng, n, bounds);
        g.is_neighbor_shared().then_some(g)
    })
}

/// A graph satisfying the coupling bounds with at least two positive
/// in-neighbors per vertex, not necessarily neighbor-shared.
pub fn random_coupled_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, bounds: &CouplingBounds) -> SignedDigraph {
    let CouplingBounds { alpha, beta } = *bounds;
    let kmax = max_positive_in_degree(n, bounds);
    assert!(n >= 3 && kmax >= 2, "coupled graph needs n >= 3 and room for two positive in-edges");
    let mut edges = Vec::new();
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let k = rng.random_range(2..=kmax);
        let picked = index::sample(rng, others.len(), k).into_vec();
        // excess over alpha shared out of the remaining budget
        let budget = (1.0 - alpha - k as f64 * alpha).max(0.0);
        let total_extra = rng.random::<f64>() * budget;
        let shares = simplex_weights(rng, k);
        let mut used = vec![false; others.len()];
        for (slot, share) in picked.iter().zip(&shares) {
            used[*slot] = true;
            edges.push(Edge { source: others[*slot], target: i, weight: alpha + share * total_extra });
        }
        let rest: Vec<usize> = (0..others.len()).filter(|s| !used[*s]).map(|s| others[s]).collect();
        if beta > 0.0 && !rest.is_empty() && rng.random::<f64>() < 0.7 {
            let m = rng.random_range(1..=rest.len());
            let chosen = index::sample(rng, rest.len(), m).into_vec();
            // total negative mass in (0, beta]
            let mass = beta * (1.0 - rng.random::<f64>());
            let shares = simplex_weights(rng, m);
            for (slot, share) in chosen.iter().zip(&shares) {
                let w = -(mass * share);
                if w != 0.0 {
                    edges.push(Edge { source: rest[*slot], target: i, weight: w });
                }
            }
        }
    }
    SignedDigraph::new(n, edges).expect("generated edges are well formed")
}
