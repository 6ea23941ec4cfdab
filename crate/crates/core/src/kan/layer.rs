//! KAN transforms and their MLP stand-ins.
//!
//! * the inner spline map `φ(x)_o = Σ_i Σ_k c[i,o,k] B_k(x_i)`,
//! * the outer KAN map `Φ(x)_o = Σ_i ω_b[i,o] SiLU(x_i) + ω_s[i,o] φ(x)_{i,o}`,
//! * an affine map followed by SiLU, used when splines are ablated.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spline::SplineGrid;
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Node, ParamId, ParamStore, Tape};

/// Spline hyperparameters shared by every transform of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineSettings {
    pub grid: SplineGrid,
    /// Inputs are multiplied by this factor before clamping into the grid.
    pub input_scale: f64,
}

impl SplineSettings {
    pub fn new(lo: f64, hi: f64, intervals: usize, order: usize, input_scale: f64) -> Result<Self> {
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::Config(format!(
                "spline input scale must be positive, got {input_scale}"
            )));
        }
        Ok(Self {
            grid: SplineGrid::new(lo, hi, intervals, order)?,
            input_scale,
        })
    }
}

impl Default for SplineSettings {
    fn default() -> Self {
        Self::new(-1.0, 1.0, 5, 3, 1.0).expect("default grid is valid")
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Spline coefficients for `f_io(x) = a_io · x` with `a_io ~ U(±bound)`.
///
/// A linear start keeps `f(0) = 0`, so sparse inputs do not add a large
/// offset shared by every node.
fn linear_coefficients(
    rng: &mut ChaCha8Rng,
    d_in: usize,
    d_out: usize,
    settings: &SplineSettings,
    bound: f64,
) -> DenseMatrix {
    let xi = settings.grid.greville();
    let nb = xi.len();
    let slopes = uniform(rng, d_in, d_out, bound / settings.input_scale);
    DenseMatrix::from_fn(d_in, d_out * nb, |i, c| slopes.get(i, c / nb) * xi[c % nb])
}

/// Inner map `φ`: pure spline expansion, `d_in → d_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineMap {
    pub d_in: usize,
    pub d_out: usize,
    pub coef: ParamId,
}

impl SplineMap {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        settings: &SplineSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let coef = store.insert(format!("{name}.coef"), linear_coefficients(rng, d_in, d_out, settings, bound))?;
        Ok(Self { d_in, d_out, coef })
    }

    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        store: &ParamStore,
        x: Node,
        settings: &SplineSettings,
    ) -> Result<Node> {
        let c = tape.param(store, self.coef);
        tape.spline(x, c, None, &settings.grid, settings.input_scale)
    }
}

/// Outer KAN map `Φ` with spline coefficients `c` and residual weights
/// `ω_b` (on SiLU) and `ω_s` (on the spline).
#[derive(Clone, Debug, PartialEq)]
pub struct KanLayerParams {
    pub d_in: usize,
    pub d_out: usize,
    pub coef: ParamId,
    pub base_weight: ParamId,
    pub spline_weight: ParamId,
}

impl KanLayerParams {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        settings: &SplineSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let coef = store.insert(format!("{name}.coef"), linear_coefficients(rng, d_in, d_out, settings, bound))?;
        let base_weight = store.insert(format!("{name}.w_base"), uniform(rng, d_in, d_out, bound))?;
        let spline_weight =
            store.insert(format!("{name}.w_spline"), DenseMatrix::filled(d_in, d_out, 1.0))?;
        Ok(Self {
            d_in,
            d_out,
            coef,
            base_weight,
            spline_weight,
        })
    }

    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        store: &ParamStore,
        x: Node,
        settings: &SplineSettings,
    ) -> Result<Node> {
        kan_transform(tape, store, x, self, settings)
    }
}

/// `out[r][o] = Σ_i ω_b[i,o]·SiLU(x[r,i]) + ω_s[i,o]·Σ_k c[i,o,k]·B_k(x[r,i])`.
pub fn kan_transform<'a>(
    tape: &mut Tape<'a>,
    store: &ParamStore,
    x: Node,
    params: &KanLayerParams,
    settings: &SplineSettings,
) -> Result<Node> {
    let width = tape.value(x).cols();
    if width != params.d_in {
        return Err(Error::shape(
            "kan_transform",
            format!("input width {width}, layer expects {}", params.d_in),
        ));
    }
    let act = tape.silu(x);
    let wb = tape.param(store, params.base_weight);
    let base = tape.matmul(act, wb)?;
    let c = tape.param(store, params.coef);
    let ws = tape.param(store, params.spline_weight);
    let spline = tape.spline(x, c, Some(ws), &settings.grid, settings.input_scale)?;
    tape.add(base, spline)
}

/// `SiLU(x·W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSilu {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl AffineSilu {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let weight = store.insert(format!("{name}.weight"), uniform(rng, d_in, d_out, bound))?;
        let bias = store.insert(format!("{name}.bias"), DenseMatrix::zeros(1, d_out))?;
        Ok(Self {
            d_in,
            d_out,
            weight,
            bias,
        })
    }

    pub fn forward<'a>(&self, tape: &mut Tape<'a>, store: &ParamStore, x: Node) -> Result<Node> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let lin = tape.matmul(x, w)?;
        let lin = tape.add_row(lin, b)?;
        Ok(tape.silu(lin))
    }
}

/// One of the element transforms used inside encoders and fusion.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Spline(SplineMap),
    Kan(KanLayerParams),
    Mlp(AffineSilu),
}

impl Transform {
    pub fn d_out(&self) -> usize {
        match self {
            Transform::Spline(m) => m.d_out,
            Transform::Kan(m) => m.d_out,
            Transform::Mlp(m) => m.d_out,
        }
    }

    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        store: &ParamStore,
        x: Node,
        settings: &SplineSettings,
    ) -> Result<Node> {
        match self {
            Transform::Spline(m) => m.forward(tape, store, x, settings),
            Transform::Kan(m) => m.forward(tape, store, x, settings),
            Transform::Mlp(m) => m.forward(tape, store, x),
        }
    }
}
