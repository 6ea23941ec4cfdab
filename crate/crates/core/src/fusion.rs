//! Multi-view fusion: attention-weighted linear combination, KAN mixing of
//! the concatenated views, and assembly of the final role embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kan::{SplineSettings, Transform};
use crate::numeric::{DenseMatrix, Node, ParamId, ParamStore, Tape};

/// Granularity of the attention coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AttentionMode {
    /// One coefficient per view, from the row-mean of `tanh(F·W + b)`.
    #[default]
    PerView,
    /// One coefficient per view and drug.
    PerDrug,
}

impl AttentionMode {
    pub fn name(self) -> &'static str {
        match self {
            AttentionMode::PerView => "per_view",
            AttentionMode::PerDrug => "per_drug",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_view" => Some(AttentionMode::PerView),
            "per_drug" => Some(AttentionMode::PerDrug),
            _ => None,
        }
    }
}

/// Projection `W` (h×h), bias `b` (1×h) and query `q` (h×1).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w: ParamId,
    pub b: ParamId,
    pub q: ParamId,
}

impl AttentionParams {
    pub fn init(store: &mut ParamStore, name: &str, h: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = (6.0 / (2 * h) as f64).sqrt();
        let w = DenseMatrix::from_fn(h, h, |_, _| rng.random_range(-bound..=bound));
        let q = DenseMatrix::from_fn(h, 1, |_, _| rng.random_range(-bound..=bound));
        Ok(Self {
            w: store.insert(format!("{name}.W"), w)?,
            b: store.insert(format!("{name}.b"), DenseMatrix::zeros(1, h))?,
            q: store.insert(format!("{name}.q"), q)?,
        })
    }
}

/// Attention output: the fused embedding and the softmax weights
/// (`1 x 3` per-view, `N x 3` per-drug).
#[derive(Clone, Copy, Debug)]
pub struct Fused {
    pub embedding: Node,
    pub weights: Node,
}

/// `w_i = qᵀ tanh(W F_i + b)`, `α = softmax(w)`, `fused = Σ α_i F_i`.
pub fn attention_fuse<'a>(
    tape: &mut Tape<'a>,
    store: &ParamStore,
    views: [Node; 3],
    params: &AttentionParams,
    mode: AttentionMode,
) -> Result<Fused> {
    let shape = tape.value(views[0]).shape();
    if views.iter().any(|&v| tape.value(v).shape() != shape) {
        return Err(Error::shape("attention_fuse", "view embeddings differ in shape"));
    }
    let w = tape.param(store, params.w);
    let b = tape.param(store, params.b);
    let q = tape.param(store, params.q);
    let mut logits = Vec::with_capacity(3);
    for &f in &views {
        let proj = tape.matmul(f, w)?;
        let proj = tape.add_row(proj, b)?;
        let act = tape.tanh(proj);
        let pooled = match mode {
            AttentionMode::PerView => tape.mean_rows(act),
            AttentionMode::PerDrug => act,
        };
        logits.push(tape.matmul(pooled, q)?);
    }
    let logits = tape.concat_cols(&logits)?;
    let weights = tape.softmax_rows(logits);
    let mut fused = tape.scale_by_column(views[0], weights, 0)?;
    for (i, &f) in views.iter().enumerate().skip(1) {
        let part = tape.scale_by_column(f, weights, i)?;
        fused = tape.add(fused, part)?;
    }
    Ok(Fused {
        embedding: fused,
        weights,
    })
}

/// Concatenates the three views (width 3h) and maps them through `transform`.
pub fn kan_fuse<'a>(
    tape: &mut Tape<'a>,
    store: &ParamStore,
    views: [Node; 3],
    transform: &Transform,
    settings: &SplineSettings,
) -> Result<Node> {
    let cat = tape.concat_cols(&views)?;
    transform.forward(tape, store, cat, settings)
}

/// `S = S^Attn ‖ S^NL`; a missing half is omitted.
pub fn assemble<'a>(tape: &mut Tape<'a>, attn: Option<Node>, nonlinear: Option<Node>) -> Result<Node> {
    match (attn, nonlinear) {
        (Some(a), Some(n)) => {
            if tape.value(a).rows() != tape.value(n).rows() {
                return Err(Error::shape("assemble", "row counts differ"));
            }
            tape.concat_cols(&[a, n])
        }
        (Some(a), None) => Ok(a),
        (None, Some(n)) => Ok(n),
        (None, None) => Err(Error::Config(
            "both fusion paths are disabled; nothing to decode".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::KanLayerParams;
    use crate::numeric::tape::silu;
    use rand::SeedableRng;

    fn setup(h: usize) -> (ParamStore, AttentionParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = AttentionParams::init(&mut store, "att", h, &mut rng).unwrap();
        (store, p)
    }

    #[test]
    fn identical_views_get_equal_weights() {
        let (store, p) = setup(3);
        let f = DenseMatrix::from_fn(4, 3, |r, c| (r as f64 - c as f64) * 0.4);
        for mode in [AttentionMode::PerView, AttentionMode::PerDrug] {
            let mut tape = Tape::new();
            let v = [f.clone(), f.clone(), f.clone()].map(|m| tape.constant(m));
            let out = attention_fuse(&mut tape, &store, v, &p, mode).unwrap();
            for w in tape.value(out.weights).as_slice() {
                assert!((w - 1.0 / 3.0).abs() < 1e-15);
            }
            assert!(tape.value(out.embedding).max_abs_diff(&f) < 1e-15);
        }
    }

    #[test]
    fn softmax_of_forced_logits() {
        let mut tape = Tape::new();
        let w = tape.constant(DenseMatrix::from_vec(1, 3, vec![2f64.ln(), 0.0, 0.0]).unwrap());
        let a = tape.softmax_rows(w);
        let got = tape.value(a).as_slice();
        for (g, e) in got.iter().zip([0.5, 0.25, 0.25]) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_form_a_simplex() {
        let (store, p) = setup(2);
        let mut tape = Tape::new();
        let v = [0.3, -1.2, 2.5].map(|s| {
            tape.constant(DenseMatrix::from_fn(3, 2, |r, c| s * (r as f64 + 1.0) - c as f64))
        });
        let out = attention_fuse(&mut tape, &store, v, &p, AttentionMode::PerView).unwrap();
        let w = tape.value(out.weights).as_slice();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&a| a > 0.0 && a < 1.0));
    }

    #[test]
    fn kan_fuse_zero_and_scalar_cases() {
        let settings = SplineSettings::default();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = KanLayerParams::init(&mut store, "f", 3, 1, &settings, &mut rng).unwrap();
        let t = Transform::Kan(k.clone());

        store.get_mut(k.coef).value.fill(0.0);
        let mut tape = Tape::new();
        let v = [(); 3].map(|_| tape.constant(DenseMatrix::zeros(2, 1)));
        let y = kan_fuse(&mut tape, &store, v, &t, &settings).unwrap();
        assert_eq!(tape.value(y), &DenseMatrix::zeros(2, 1));

        // 1 node, h = 1: output is the scalar KAN sum over the 3-vector
        let mut store = ParamStore::new();
        let k = KanLayerParams::init(&mut store, "f", 3, 1, &settings, &mut rng).unwrap();
        let t = Transform::Kan(k.clone());
        let xs = [0.4, -0.75, 0.1];
        let mut tape = Tape::new();
        let v = xs.map(|x| tape.constant(DenseMatrix::scalar(x)));
        let y = kan_fuse(&mut tape, &store, v, &t, &settings).unwrap();
        let nb = settings.grid.basis_count();
        let mut expected = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let basis = crate::kan::bspline_basis(x, &settings.grid);
            let coef = &store.value(k.coef).row(i)[..nb];
            let spline: f64 = basis.iter().zip(coef).map(|(b, c)| b * c).sum();
            expected += store.value(k.base_weight).get(i, 0) * silu(x)
                + store.value(k.spline_weight).get(i, 0) * spline;
        }
        assert!((tape.value(y).item() - expected).abs() < 1e-14);
    }

    #[test]
    fn assemble_widths_and_ablations() {
        let mut tape = Tape::new();
        let a = tape.constant(DenseMatrix::filled(1, 2, 1.0));
        let n = tape.constant(DenseMatrix::filled(1, 2, 2.0));
        let s = assemble(&mut tape, Some(a), Some(n)).unwrap();
        assert_eq!(tape.value(s).shape(), (1, 4));
        let only_nl = assemble(&mut tape, None, Some(n)).unwrap();
        assert_eq!(tape.value(only_nl), tape.value(n));
        assert!(matches!(assemble(&mut tape, None, None), Err(Error::Config(_))));
    }
}
