//! Bilinear interaction scoring `σ(S_uᵀ M T_v)` and the BCE objective.

use crate::error::{Error, Result};
use crate::numeric::tape::sigmoid;
use crate::numeric::{DenseMatrix, Node, Tape};

/// Probability clamp applied before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

fn check_pairs(n_src: usize, n_tgt: usize, pairs: &[(usize, usize)]) -> Result<()> {
    match pairs.iter().find(|&&(u, v)| u >= n_src || v >= n_tgt) {
        Some(&(u, v)) => Err(Error::Request(format!(
            "pair ({u}, {v}) outside {n_src}x{n_tgt} embeddings"
        ))),
        None => Ok(()),
    }
}

/// Raw bilinear logits `S_uᵀ M T_v` for each pair.
pub fn logits(
    s: &DenseMatrix,
    t: &DenseMatrix,
    m: &DenseMatrix,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    if s.cols() != m.rows() || t.cols() != m.cols() {
        return Err(Error::shape(
            "score",
            format!(
                "S width {}, T width {}, M {}x{}",
                s.cols(),
                t.cols(),
                m.rows(),
                m.cols()
            ),
        ));
    }
    check_pairs(s.rows(), t.rows(), pairs)?;
    let sm = s.matmul(m)?;
    Ok(pairs
        .iter()
        .map(|&(u, v)| crate::numeric::dense::dot(sm.row(u), t.row(v)))
        .collect())
}

/// `ŷ_{u→v} = σ(S_uᵀ M T_v)` for each pair.
pub fn score(
    s: &DenseMatrix,
    t: &DenseMatrix,
    m: &DenseMatrix,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    Ok(logits(s, t, m, pairs)?.into_iter().map(sigmoid).collect())
}

/// Direction-blind scores `σ(½(S_uᵀ M T_v + S_vᵀ M T_u))`; bitwise
/// symmetric in `(u, v)`.
pub fn score_symmetric(
    s: &DenseMatrix,
    t: &DenseMatrix,
    m: &DenseMatrix,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let fwd = logits(s, t, m, pairs)?;
    let rev: Vec<(usize, usize)> = pairs.iter().map(|&(u, v)| (v, u)).collect();
    let bwd = logits(s, t, m, &rev)?;
    Ok(fwd
        .iter()
        .zip(&bwd)
        .map(|(a, b)| sigmoid(0.5 * (a + b)))
        .collect())
}

fn logits_on_tape<'a>(
    tape: &mut Tape<'a>,
    sm: Node,
    t: Node,
    pairs: &[(usize, usize)],
) -> Result<Node> {
    let src = tape.gather_rows(sm, pairs.iter().map(|p| p.0).collect())?;
    let tgt = tape.gather_rows(t, pairs.iter().map(|p| p.1).collect())?;
    tape.row_dot(src, tgt)
}

/// Recorded version of [`score`] (or [`score_symmetric`]); returns an
/// `n x 1` probability column.
pub fn score_on_tape<'a>(
    tape: &mut Tape<'a>,
    s: Node,
    t: Node,
    m: Node,
    pairs: &[(usize, usize)],
    symmetric: bool,
) -> Result<Node> {
    check_pairs(tape.value(s).rows(), tape.value(t).rows(), pairs)?;
    check_pairs(tape.value(t).rows(), tape.value(s).rows(), pairs)?;
    let sm = tape.matmul(s, m)?;
    let mut raw = logits_on_tape(tape, sm, t, pairs)?;
    if symmetric {
        let rev: Vec<(usize, usize)> = pairs.iter().map(|&(u, v)| (v, u)).collect();
        let back = logits_on_tape(tape, sm, t, &rev)?;
        let sum = tape.add(raw, back)?;
        raw = tape.scale(sum, 0.5);
    }
    Ok(tape.sigmoid(raw))
}

/// Mean of `−[y·ln ŷ + (1−y)·ln(1−ŷ)]` with `ŷ` clamped to `[ε, 1−ε]`.
pub fn bce_loss(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Usage("binary cross-entropy over an empty batch".into()));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::shape("bce_loss", "probability and label counts differ"));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probabilities.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_scores_one_half() {
        let s = DenseMatrix::from_fn(3, 2, |r, c| r as f64 - c as f64);
        let m = DenseMatrix::zeros(2, 2);
        let p = score(&s, &s, &m, &[(0, 1), (2, 0)]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn identity_on_unit_vectors() {
        let e1 = DenseMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let p = score(&e1, &e1, &DenseMatrix::identity(2), &[(0, 0)]).unwrap();
        assert!((p[0] - 0.7310585786300049).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_pair_is_request_error() {
        let s = DenseMatrix::zeros(2, 2);
        let m = DenseMatrix::zeros(2, 2);
        assert!(matches!(score(&s, &s, &m, &[(0, 2)]), Err(Error::Request(_))));
    }

    #[test]
    fn tape_scoring_agrees_with_direct() {
        let s = DenseMatrix::from_fn(4, 3, |r, c| ((r * 3 + c) as f64).sin());
        let t = DenseMatrix::from_fn(4, 3, |r, c| ((r + 2 * c) as f64).cos());
        let m = DenseMatrix::from_fn(3, 3, |r, c| (r as f64 - c as f64) * 0.3 + 0.1);
        let pairs = [(0, 1), (3, 2), (1, 0), (2, 2)];
        let direct = score(&s, &t, &m, &pairs).unwrap();
        let mut tape = Tape::new();
        let (sn, tn, mn) = (tape.constant(s), tape.constant(t), tape.constant(m));
        let p = score_on_tape(&mut tape, sn, tn, mn, &pairs, false).unwrap();
        for (a, b) in tape.value(p).as_slice().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_scores_are_bitwise_symmetric() {
        let s = DenseMatrix::from_fn(5, 3, |r, c| ((r * 7 + c) as f64 * 0.37).sin());
        let m0 = DenseMatrix::from_fn(3, 3, |r, c| ((r * 3 + c) as f64 * 0.91).cos());
        let m = DenseMatrix::from_fn(3, 3, |r, c| 0.5 * (m0.get(r, c) + m0.get(c, r)));
        for u in 0..5 {
            for v in 0..5 {
                let p = score_symmetric(&s, &s, &m, &[(u, v), (v, u)]).unwrap();
                assert_eq!(p[0], p[1]);
                // the plain bilinear form agrees up to rounding
                let q = score(&s, &s, &m, &[(u, v), (v, u)]).unwrap();
                assert!((q[0] - q[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn independent_embeddings_break_symmetry() {
        let s = DenseMatrix::from_fn(5, 3, |r, c| ((r * 7 + c) as f64 * 0.37).sin());
        let t = DenseMatrix::from_fn(5, 3, |r, c| ((r * 5 + 2 * c) as f64 * 0.53).cos());
        let m = DenseMatrix::from_fn(3, 3, |r, c| ((r * 3 + c) as f64 * 0.91).cos());
        let p = score(&s, &t, &m, &[(0, 1), (1, 0)]).unwrap();
        assert!((p[0] - p[1]).abs() > 1e-6);
    }

    #[test]
    fn loss_examples() {
        assert!((bce_loss(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() <= 1e-11);
        let expected = (-(0.9f64.ln()) - 0.8f64.ln()) / 2.0;
        let got = bce_loss(&[0.9, 0.2], &[1.0, 0.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.1643).abs() < 1e-4);
        assert!(matches!(bce_loss(&[], &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn loss_decreases_toward_label() {
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let p = k as f64 / 20.0;
            let l = bce_loss(&[p], &[1.0]).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }
}
