//! Graph views against brute-force constructions.

use mgkan::numeric::{DenseMatrix, SparseMatrix};
use mgkan::views::{
    build_adjacency, build_co_interaction, build_similarity, jaccard, normalize, DrugGraph, FeatureFamily, FeatureTable,
    ViewSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{co_interaction_oracle, max_abs_diff, normalize_oracle, random_digraph, random_features, similarity_oracle};

#[test]
fn co_interaction_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let g = random_digraph(&mut rng, 50);
        let (c_in, c_out) = co_interaction_oracle(&g);
        let (a_out, _) = build_adjacency(&g);
        let (got_in, got_out) = build_co_interaction(&a_out).unwrap();
        assert!(max_abs_diff(&got_in, &c_in) <= 1e-12, "C_in");
        assert!(max_abs_diff(&got_out, &c_out) <= 1e-12, "C_out");
    }
}

#[test]
fn edge_pair_example() {
    let g = DrugGraph::with_indices(3, vec![(2, 0), (2, 1)]).unwrap();
    let (a_out, _) = build_adjacency(&g);
    let (c_in, c_out) = build_co_interaction(&a_out).unwrap();
    assert_eq!(c_in.get(0, 1), 0.5);
    assert_eq!(c_in.get(1, 0), 0.5);
    assert_eq!(c_out.without_diagonal().nnz(), 0);
}

#[test]
fn similarity_matches_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.random_range(1..=40);
        let table = random_features(&mut rng, n);
        let b = build_similarity(&table);
        let want = similarity_oracle(&table);
        for (u, row) in want.iter().enumerate() {
            for (v, &w) in row.iter().enumerate() {
                assert_eq!(b.get(u, v), w, "B[{u}][{v}]");
            }
        }
    }
}

#[test]
fn identical_feature_sets_give_three() {
    let fam = |name: &str| FeatureFamily {
        items: vec![format!("{name}0"), format!("{name}1")],
        members: vec![vec![0, 1], vec![0, 1], vec![]],
    };
    let t = FeatureTable::new([fam("t"), fam("e"), fam("p")]).unwrap();
    let b = build_similarity(&t);
    assert_eq!(b.get(0, 1), 3.0);
    assert_eq!(b.get(0, 2), 0.0);
    assert_eq!(b.get(0, 0), 0.0);
}

#[test]
fn normalize_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..=30);
        let eps = [0.0, 1e-8, 0.5][rng.random_range(0..3)];
        let dense = DenseMatrix::from_fn(n, n, |_, _| if rng.random_bool(0.3) { rng.random_range(0.0..3.0) } else { 0.0 });
        let m = SparseMatrix::from_dense(&dense);
        let got = normalize(&m, eps).unwrap();
        assert!(max_abs_diff(&got, &normalize_oracle(&dense, eps)) <= 1e-12);
    }
}

#[test]
fn spmm_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (r, c, k) = (rng.random_range(1..20), rng.random_range(1..20), rng.random_range(1..6));
        let a = DenseMatrix::from_fn(r, c, |_, _| if rng.random_bool(0.3) { rng.random_range(-2.0..2.0) } else { 0.0 });
        let x = DenseMatrix::from_fn(c, k, |_, _| rng.random_range(-1.0..1.0));
        let g = DenseMatrix::from_fn(r, k, |_, _| rng.random_range(-1.0..1.0));
        let s = SparseMatrix::from_dense(&a);
        assert!(s.spmm(&x).unwrap().max_abs_diff(&a.matmul(&x).unwrap()) < 1e-12);
        assert!(s.t_spmm(&g).unwrap().max_abs_diff(&a.transpose().matmul(&g).unwrap()) < 1e-12);
        assert_eq!(s.transpose().to_dense(), a.transpose());
    }
}

#[test]
fn transpose_duality_of_views() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let g = random_digraph(&mut rng, 50);
        let reversed = DrugGraph::with_indices(g.n_drugs(), g.edges().iter().map(|&(u, v)| (v, u)).collect()).unwrap();
        let f = ViewSet::build(&g, None, 1e-8, "g").unwrap();
        let r = ViewSet::build(&reversed, None, 1e-8, "r").unwrap();
        // reversing every edge swaps the out and in roles
        assert_eq!(f.a_out.to_dense(), r.a_in.to_dense());
        assert_eq!(f.a_in.to_dense(), r.a_out.to_dense());
        assert!(f.c_out.to_dense().max_abs_diff(&r.c_in.to_dense()) < 1e-12);
        assert!(f.c_in.to_dense().max_abs_diff(&r.c_out.to_dense()) < 1e-12);
        assert_eq!(f.a_in.to_dense(), f.a_out.to_dense().transpose());
        for m in [&f.c_in, &f.c_out] {
            assert!(m.to_dense().max_abs_diff(&m.to_dense().transpose()) < 1e-12);
            assert!((0..g.n_drugs()).all(|i| m.get(i, i) == 0.0));
        }
    }
}

proptest! {
    #[test]
    fn jaccard_is_symmetric_and_bounded(
        a in proptest::collection::btree_set(0usize..20, 0..10),
        b in proptest::collection::btree_set(0usize..20, 0..10),
    ) {
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().collect();
        let j = jaccard(&a, &b);
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&j));
        if !a.is_empty() {
            prop_assert_eq!(jaccard(&a, &a), 1.0);
        }
    }

    #[test]
    fn normalized_entries_stay_nonnegative_and_bounded(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_digraph(&mut rng, 50);
        let v = ViewSet::build(&g, None, 1e-8, "p").unwrap();
        for m in [&v.a_out, &v.a_in, &v.c_out, &v.c_in] {
            // each entry is at most sqrt(w_ij^2 / (r_i c_j)) <= 1
            prop_assert!(m.values().iter().all(|&w| (0.0..=1.0 + 1e-12).contains(&w)));
        }
    }
}
