//! B-spline basis against the textbook Cox–de Boor recursion.

use mgkan::kan::{bspline_basis, SplineGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::cox_de_boor;

fn random_grid(rng: &mut ChaCha8Rng, order: usize) -> SplineGrid {
    let lo = rng.random_range(-3.0..1.0);
    let hi = lo + rng.random_range(0.5..4.0);
    SplineGrid::new(lo, hi, rng.random_range(1..=12), order).unwrap()
}

#[test]
fn matches_recursive_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for order in 0..=3 {
        for _ in 0..50 {
            let g = random_grid(&mut rng, order);
            for _ in 0..20 {
                let x = rng.random_range(g.lo()..g.hi());
                let fast = bspline_basis(x, &g);
                assert_eq!(fast.len(), g.basis_count());
                for (j, &b) in fast.iter().enumerate() {
                    let slow = cox_de_boor(g.knots(), j, order, x);
                    assert!((b - slow).abs() < 1e-12, "order {order} j {j} x {x}: {b} vs {slow}");
                }
            }
        }
    }
}

#[test]
fn partition_of_unity_and_local_support() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for order in 1..=3 {
        let mut checked = 0;
        while checked < 1000 {
            let g = random_grid(&mut rng, order);
            for _ in 0..50 {
                let x = rng.random_range(g.lo()..g.hi());
                let b = bspline_basis(x, &g);
                let sum: f64 = b.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-10, "sum {sum} at {x}");
                let t = g.knots();
                for (j, &v) in b.iter().enumerate() {
                    // B_j vanishes outside [t_j, t_{j+k+1})
                    if x < t[j] || x >= t[j + order + 1] {
                        assert_eq!(v, 0.0, "order {order} j {j} x {x}");
                    } else {
                        assert!(v >= 0.0);
                    }
                }
                checked += 1;
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn greville_coefficients_reproduce_identity() {
    for order in 1..=3 {
        let g = SplineGrid::new(-1.0, 1.0, 5, order).unwrap();
        let xi = g.greville();
        for i in 0..=40 {
            let x = -1.0 + i as f64 / 20.0;
            let y: f64 = bspline_basis(x, &g).iter().zip(&xi).map(|(b, c)| b * c).sum();
            assert!((y - x).abs() < 1e-12, "order {order}: f({x}) = {y}");
        }
    }
}

#[test]
fn inputs_are_clamped_into_the_domain() {
    let g = SplineGrid::new(-1.0, 1.0, 5, 3).unwrap();
    assert_eq!(bspline_basis(-7.0, &g), bspline_basis(-1.0, &g));
    assert_eq!(bspline_basis(42.0, &g), bspline_basis(1.0, &g));
    let sum: f64 = bspline_basis(1.0, &g).iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn basis_is_nonnegative_and_sums_to_one(x in -5.0f64..5.0, order in 0usize..=3, intervals in 1usize..10) {
        let g = SplineGrid::new(-2.0, 2.0, intervals, order).unwrap();
        let b = bspline_basis(x, &g);
        prop_assert!(b.iter().all(|&v| v >= 0.0));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= order + 1);
    }
}
