//! Graph KAN layers `X' = Φ(Â·φ(X))` and the five per-view encoder stacks.

use rand_chacha::ChaCha8Rng;

use super::layer::{AffineSilu, KanLayerParams, SplineMap, SplineSettings, Transform};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Node, ParamStore, SparseMatrix, Tape};
use crate::views::ViewSet;

#[derive(Clone, Debug, PartialEq)]
pub struct GkanLayer {
    /// `φ`, applied per node before propagation.
    pub inner: Transform,
    /// `Φ`, applied to the aggregated messages.
    pub outer: Transform,
}

/// One message-passing step: `Φ(Â · φ(X))`.
pub fn gkan_layer<'a>(
    tape: &mut Tape<'a>,
    store: &ParamStore,
    propagation: &'a SparseMatrix,
    x: Node,
    layer: &GkanLayer,
    settings: &SplineSettings,
) -> Result<Node> {
    let n = tape.value(x).rows();
    if propagation.rows() != n || propagation.cols() != n {
        return Err(Error::shape(
            "gkan_layer",
            format!(
                "{}x{} propagation for {n} nodes",
                propagation.rows(),
                propagation.cols()
            ),
        ));
    }
    let messages = layer.inner.forward(tape, store, x, settings)?;
    let aggregated = tape.spmm(propagation, messages)?;
    layer.outer.forward(tape, store, aggregated, settings)
}

/// `L` stacked GKAN layers over one propagation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GkanStack {
    pub layers: Vec<GkanLayer>,
}

impl GkanStack {
    /// Layer 1 maps `d_in → hidden` in `φ`; every other map is `hidden → hidden`.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        depth: usize,
        use_kan: bool,
        settings: &SplineSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("encoder depth must be at least 1".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let width = if l == 0 { d_in } else { hidden };
            let prefix = format!("{name}.l{l}");
            let layer = if use_kan {
                GkanLayer {
                    inner: Transform::Spline(SplineMap::init(
                        store,
                        &format!("{prefix}.phi"),
                        width,
                        hidden,
                        settings,
                        rng,
                    )?),
                    outer: Transform::Kan(KanLayerParams::init(
                        store,
                        &format!("{prefix}.Phi"),
                        hidden,
                        hidden,
                        settings,
                        rng,
                    )?),
                }
            } else {
                GkanLayer {
                    inner: Transform::Mlp(AffineSilu::init(
                        store,
                        &format!("{prefix}.phi"),
                        width,
                        hidden,
                        rng,
                    )?),
                    outer: Transform::Mlp(AffineSilu::init(
                        store,
                        &format!("{prefix}.Phi"),
                        hidden,
                        hidden,
                        rng,
                    )?),
                }
            };
            layers.push(layer);
        }
        Ok(Self { layers })
    }

    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        store: &ParamStore,
        propagation: &'a SparseMatrix,
        x: Node,
        settings: &SplineSettings,
    ) -> Result<Node> {
        let mut h = x;
        for layer in &self.layers {
            h = gkan_layer(tape, store, propagation, h, layer, settings)?;
        }
        Ok(h)
    }
}

/// Encoder stacks for the five propagation matrices. `None` marks a view
/// removed by ablation; its embedding is all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewEncoders {
    pub a_out: Option<GkanStack>,
    pub a_in: Option<GkanStack>,
    pub c_out: Option<GkanStack>,
    pub c_in: Option<GkanStack>,
    pub sim: Option<GkanStack>,
    pub hidden: usize,
}

/// Role-specific embeddings `S_N, T_N, S_C, T_C, Z_S`.
#[derive(Clone, Copy, Debug)]
pub struct RoleEmbeddings {
    pub s_n: Node,
    pub t_n: Node,
    pub s_c: Node,
    pub t_c: Node,
    pub z_s: Node,
}

fn encode_one<'a>(
    tape: &mut Tape<'a>,
    store: &ParamStore,
    stack: Option<&GkanStack>,
    propagation: Option<&'a SparseMatrix>,
    x: Node,
    hidden: usize,
    settings: &SplineSettings,
) -> Result<Node> {
    match (stack, propagation) {
        (Some(stack), Some(p)) => stack.forward(tape, store, p, x, settings),
        (Some(_), None) => Err(Error::Config(
            "similarity encoder configured but no similarity view is available".into(),
        )),
        (None, _) => {
            let n = tape.value(x).rows();
            Ok(tape.constant(DenseMatrix::zeros(n, hidden)))
        }
    }
}

/// Runs the five view encoders over `x`.
pub fn encode_views<'a>(
    tape: &mut Tape<'a>,
    store: &ParamStore,
    views: &'a ViewSet,
    x: Node,
    encoders: &ViewEncoders,
    settings: &SplineSettings,
) -> Result<RoleEmbeddings> {
    let rows = tape.value(x).rows();
    if rows != views.n_drugs() {
        return Err(Error::shape(
            "encode_views",
            format!("{rows} feature rows for {} drugs", views.n_drugs()),
        ));
    }
    let h = encoders.hidden;
    Ok(RoleEmbeddings {
        s_n: encode_one(tape, store, encoders.a_out.as_ref(), Some(&views.a_out), x, h, settings)?,
        t_n: encode_one(tape, store, encoders.a_in.as_ref(), Some(&views.a_in), x, h, settings)?,
        s_c: encode_one(tape, store, encoders.c_out.as_ref(), Some(&views.c_out), x, h, settings)?,
        t_c: encode_one(tape, store, encoders.c_in.as_ref(), Some(&views.c_in), x, h, settings)?,
        z_s: encode_one(tape, store, encoders.sim.as_ref(), views.sim.as_ref(), x, h, settings)?,
    })
}
