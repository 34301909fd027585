use formation_core::sampling::{self, random_admissible_graph, random_coupled_graph};
use formation_core::signed_graph::{CouplingBounds, CouplingClause, GeneralStochasticMatrix, SignedDigraph};
use formation_core::FormationError;
use nalgebra::DMatrix;
use proptest::prelude::*;

const CELLS: [(usize, f64, f64); 6] =
    [(3, 0.2, 0.08), (4, 0.2, 0.08), (5, 0.2, 0.08), (3, 0.3, 0.1), (4, 0.3, 0.1), (5, 0.3, 0.1)];

fn cell() -> impl Strategy<Value = (usize, CouplingBounds)> {
    (0..CELLS.len()).prop_map(|i| {
        let (n, a, b) = CELLS[i];
        (n, CouplingBounds::new(a, b).unwrap())
    })
}

/// Arbitrary signed digraph, not necessarily satisfying any bounds.
fn any_graph() -> impl Strategy<Value = SignedDigraph> {
    (2usize..7).prop_flat_map(|n| {
        proptest::collection::vec(prop_oneof![Just(0.0), -1.0..1.0f64], n * n).prop_map(move |w| {
            let edges: Vec<(usize, usize, f64)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j && w[i * n + j] != 0.0)
                .map(|(i, j)| (j + 1, i + 1, w[i * n + j]))
                .collect();
            SignedDigraph::from_one_based(n, &edges).unwrap()
        })
    })
}

fn permute(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(perm[i], perm[j])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn laplacian_rows_sum_to_zero(g in any_graph()) {
        let l = g.laplacian();
        for row in l.row_iter() {
            prop_assert!(row.sum().abs() <= 1e-12);
        }
        let a = g.adjacency_matrix();
        for i in 0..g.n() {
            prop_assert_eq!(a[(i, i)], 0.0);
        }
    }

    #[test]
    fn coupled_graphs_give_stochastic_matrices((n, b) in cell(), seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let g = random_coupled_graph(&mut rng, n, &b);
        prop_assert!(g.validate_coupling(&b).pass());
        let s = g.stochastic(&b).unwrap();
        for i in 0..n {
            prop_assert!((s.matrix().row(i).sum() - 1.0).abs() <= 1e-9);
            prop_assert!(s.matrix()[(i, i)] >= b.alpha - 1e-12);
            prop_assert!(s.negative_mass(i) >= -b.beta - 1e-12);
        }
    }

    #[test]
    fn ergodic_chain_holds((n, b) in cell(), seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let g = random_admissible_graph(&mut rng, n, &b, 1_000_000).unwrap();
        let s = g.stochastic(&b).unwrap();
        let eta = s.ergodic_coefficient();
        let margin = s.shared_weight_margin();
        prop_assert!(eta <= b.eta() + 1e-9);
        prop_assert!(eta <= 1.0 - margin + 1e-9);
        prop_assert!(margin >= b.alpha - 2.0 * b.beta - 1e-9);
    }

    #[test]
    fn ergodic_coefficient_is_permutation_invariant((n, b) in cell(), seed in any::<u64>()) {
        let mut rng = sampling::rng(seed);
        let g = random_coupled_graph(&mut rng, n, &b);
        let s = g.stochastic_unchecked();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed % n as u64) as usize);
        perm.swap(0, n - 1);
        let p = GeneralStochasticMatrix::new(permute(s.matrix(), &perm)).unwrap();
        prop_assert!((p.ergodic_coefficient() - s.ergodic_coefficient()).abs() <= 1e-12);
        prop_assert!((p.shared_weight_margin() - s.shared_weight_margin()).abs() <= 1e-12);
    }

    #[test]
    fn doc_round_trip(g in any_graph()) {
        let doc = g.to_doc();
        let back = SignedDigraph::try_from(&doc).unwrap();
        prop_assert_eq!(back, g);
    }
}

#[test]
fn laplacian_diagonal_example() {
    let g = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, -0.08)]).unwrap();
    let l = g.laplacian();
    assert!((l[(0, 0)] - 0.12).abs() < 1e-15);
    assert_eq!(l[(0, 1)], -0.2);
    assert_eq!(l[(0, 2)], 0.08);
    assert_eq!(g.adjacency_matrix().row(0).iter().copied().collect::<Vec<_>>(), [0.0, 0.2, -0.08]);
}

#[test]
fn zero_graph_gives_identity() {
    let g = SignedDigraph::empty(3).unwrap();
    assert_eq!(g.laplacian(), DMatrix::zeros(3, 3));
    assert_eq!(g.stochastic(&CouplingBounds::new(0.2, 0.0).unwrap()).unwrap().into_inner(), DMatrix::identity(3, 3));
}

#[test]
fn neighbor_sharing_examples() {
    let complete = SignedDigraph::from_one_based(
        3,
        &[(2, 1, 0.2), (3, 1, 0.2), (1, 2, 0.2), (3, 2, 0.2), (1, 3, 0.2), (2, 3, 0.2)],
    )
    .unwrap();
    assert!(complete.is_neighbor_shared());
    let cycle = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 2, 0.2), (1, 3, 0.2)]).unwrap();
    assert!(!cycle.is_neighbor_shared());
}

#[test]
fn coupling_clauses_reported() {
    let b = CouplingBounds::new(0.2, 0.08).unwrap();
    let low = SignedDigraph::from_one_based(3, &[(2, 1, 0.1)]).unwrap();
    let report = low.validate_coupling(&b);
    assert!(!report.pass());
    assert!(report.violations.iter().any(|c| matches!(c, CouplingClause::PositiveWeight { .. })));

    let neg = SignedDigraph::from_one_based(3, &[(2, 1, 0.2), (3, 1, -0.08)]).unwrap();
    assert!(neg.validate_coupling(&b).pass());

    let heavy = SignedDigraph::from_one_based(3, &[(2, 1, 0.3), (3, 1, -0.15)]).unwrap();
    assert!(matches!(heavy.stochastic(&b), Err(FormationError::CouplingViolation(_))));
}

#[test]
fn bounds_validation() {
    assert!(CouplingBounds::new(0.2, 0.1).is_err());
    assert!(CouplingBounds::new(0.2, 0.15).is_err());
    assert!(CouplingBounds::new(0.6, 0.0).is_err());
    assert!(CouplingBounds::new(0.0, 0.0).is_err());
    assert!((CouplingBounds::new(0.2, 0.08).unwrap().eta() - 0.96).abs() < 1e-12);
}

#[test]
fn ergodic_examples() {
    let avg = GeneralStochasticMatrix::new(DMatrix::from_element(4, 4, 0.25)).unwrap();
    assert_eq!(avg.ergodic_coefficient(), 0.0);
    assert!((avg.shared_weight_margin() - 1.0).abs() < 1e-15);
    let id = GeneralStochasticMatrix::new(DMatrix::identity(2, 2)).unwrap();
    assert_eq!(id.ergodic_coefficient(), 1.0);
    assert_eq!(id.shared_weight_margin(), 0.0);
}

#[test]
fn row_sum_violation_is_rejected() {
    let mut m = DMatrix::from_element(3, 3, 1.0 / 3.0);
    m[(0, 0)] += 0.1;
    assert!(matches!(GeneralStochasticMatrix::new(m), Err(FormationError::NotStochastic(_))));
}
