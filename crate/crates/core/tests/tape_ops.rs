//! Every tape operation's backward pass against central finite differences.

use mgkan::kan::SplineGrid;
use mgkan::numeric::{DenseMatrix, Node, ParamStore, SparseMatrix, Tape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, span: f64) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-span..span))
}

/// Reduces `out` to a scalar through fixed random weights so that every
/// output entry reaches the loss with a different coefficient.
fn project<'a>(tape: &mut Tape<'a>, out: Node) -> Node {
    let (r, c) = tape.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64((r * 1000 + c) as u64);
    let w = tape.constant(random(&mut rng, r, c, 1.0));
    let prod = tape.mul(out, w).unwrap();
    tape.sum_all(prod)
}

/// Builds the loss twice per perturbed entry and compares with the analytic
/// gradient of every input.
fn fd_check<'a>(inputs: Vec<DenseMatrix>, build: impl Fn(&mut Tape<'a>, &[Node]) -> Node) -> Result<(), TestCaseError> {
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, m)| store.insert(format!("in{i}"), m).unwrap())
        .collect();
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new();
        let nodes: Vec<Node> = ids.iter().map(|&id| tape.param(store, id)).collect();
        let loss = build(&mut tape, &nodes);
        tape.value(loss).item()
    };
    store.zero_grad();
    {
        let mut tape = Tape::new();
        let nodes: Vec<Node> = ids.iter().map(|&id| tape.param(&store, id)).collect();
        let loss = build(&mut tape, &nodes);
        tape.backward(loss, &mut store).unwrap();
    }
    for &id in &ids {
        let analytic = store.grad(id).clone();
        for k in 0..analytic.as_slice().len() {
            let orig = store.value(id).as_slice()[k];
            store.get_mut(id).value.as_mut_slice()[k] = orig + H;
            let up = eval(&store);
            store.get_mut(id).value.as_mut_slice()[k] = orig - H;
            let down = eval(&store);
            store.get_mut(id).value.as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.as_slice()[k];
            let err = (a - numeric).abs();
            prop_assert!(
                err <= 1e-8 || err <= 1e-4 * a.abs().max(numeric.abs()),
                "input {} entry {k}: analytic {a:e} numeric {numeric:e}",
                id.index()
            );
        }
    }
    Ok(())
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..6), rng.random_range(1..6))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_transpose(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, k) = dims(&mut rng);
        let c = rng.random_range(1..6);
        fd_check(vec![random(&mut rng, r, k, 1.0), random(&mut rng, c, k, 1.0)], |t, n| {
            let bt = t.transpose(n[1]);
            let p = t.matmul(n[0], bt).unwrap();
            project(t, p)
        })?;
    }

    #[test]
    fn add_add_row_and_scale(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        let factor = rng.random_range(-2.0..2.0);
        fd_check(
            vec![random(&mut rng, r, c, 1.0), random(&mut rng, r, c, 1.0), random(&mut rng, 1, c, 1.0)],
            |t, n| {
                let s = t.add(n[0], n[1]).unwrap();
                let b = t.add_row(s, n[2]).unwrap();
                let out = t.scale(b, factor);
                project(t, out)
            },
        )?;
    }

    #[test]
    fn elementwise_product_reusing_an_input(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        fd_check(vec![random(&mut rng, r, c, 1.0), random(&mut rng, r, c, 1.0)], |t, n| {
            let p = t.mul(n[0], n[1]).unwrap();
            let q = t.mul(p, n[0]).unwrap();
            project(t, q)
        })?;
    }

    #[test]
    fn scale_by_column_shared_and_per_row(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        let k = rng.random_range(1..4);
        let col = rng.random_range(0..k);
        fd_check(
            vec![random(&mut rng, r, c, 1.0), random(&mut rng, 1, k, 1.0), random(&mut rng, r, k, 1.0)],
            |t, n| {
                let a = t.scale_by_column(n[0], n[1], col).unwrap();
                let b = t.scale_by_column(a, n[2], col).unwrap();
                project(t, b)
            },
        )?;
    }

    #[test]
    fn activations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        fd_check(vec![random(&mut rng, r, c, 3.0)], |t, n| {
            let a = t.silu(n[0]);
            let b = t.sigmoid(n[0]);
            let c = t.tanh(n[0]);
            let parts = [project(t, a), project(t, b), project(t, c)];
            let cat = t.concat_cols(&parts).unwrap();
            t.sum_all(cat)
        })?;
    }

    #[test]
    fn softmax_over_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        fd_check(vec![random(&mut rng, r, c, 3.0)], |t, n| {
            let s = t.softmax_rows(n[0]);
            project(t, s)
        })?;
    }

    #[test]
    fn concat_and_mean_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        let c2 = rng.random_range(1..4);
        fd_check(vec![random(&mut rng, r, c, 1.0), random(&mut rng, r, c2, 1.0)], |t, n| {
            let cat = t.concat_cols(&[n[0], n[1], n[0]]).unwrap();
            let m = t.mean_rows(cat);
            project(t, m)
        })?;
    }

    #[test]
    fn gather_and_row_dot(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        let batch = rng.random_range(1..10);
        let ia: Vec<usize> = (0..batch).map(|_| rng.random_range(0..r)).collect();
        let ib: Vec<usize> = (0..batch).map(|_| rng.random_range(0..r)).collect();
        fd_check(vec![random(&mut rng, r, c, 1.0), random(&mut rng, r, c, 1.0)], |t, n| {
            let a = t.gather_rows(n[0], ia.clone()).unwrap();
            let b = t.gather_rows(n[1], ib.clone()).unwrap();
            let d = t.row_dot(a, b).unwrap();
            project(t, d)
        })?;
    }

    #[test]
    fn sparse_product(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = dims(&mut rng);
        let k = rng.random_range(1..5);
        let dense = DenseMatrix::from_fn(r, c, |_, _| if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 });
        let a = SparseMatrix::from_dense(&dense);
        fd_check(vec![random(&mut rng, c, k, 1.0)], |t, n| {
            let p = t.spmm(&a, n[0]).unwrap();
            project(t, p)
        })?;
    }

    #[test]
    fn binary_cross_entropy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..10);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let p = DenseMatrix::from_fn(n, 1, |_, _| rng.random_range(0.05..0.95));
        fd_check(vec![p], |t, nodes| t.bce(nodes[0], labels.clone(), 1e-12).unwrap())?;
    }

    #[test]
    fn spline_with_and_without_scale(seed in any::<u64>(), order in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = SplineGrid::new(-1.0, 1.0, rng.random_range(2..6), order).unwrap();
        let nb = grid.basis_count();
        let (rows, d_in) = dims(&mut rng);
        let d_out = rng.random_range(1..4);
        let input_scale = rng.random_range(0.5..1.5);
        // stay inside the domain, where the basis is smooth in x
        let x = random(&mut rng, rows, d_in, 0.6);
        fd_check(
            vec![x, random(&mut rng, d_in, d_out * nb, 1.0), random(&mut rng, d_in, d_out, 1.0)],
            |t, n| {
                let plain = t.spline(n[0], n[1], None, &grid, input_scale).unwrap();
                let scaled = t.spline(n[0], n[1], Some(n[2]), &grid, input_scale).unwrap();
                let s = t.add(plain, scaled).unwrap();
                project(t, s)
            },
        )?;
    }
}
