//! The full encoder → fusion → bilinear decoder stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder;
use crate::error::{Error, Result};
use crate::fusion::{assemble, attention_fuse, kan_fuse, AttentionMode, AttentionParams};
use crate::kan::{
    encode_views, AffineSilu, GkanStack, KanLayerParams, RoleEmbeddings, SplineSettings,
    Transform, ViewEncoders,
};
use crate::numeric::{DenseMatrix, Node, ParamId, ParamStore, Tape};
use crate::views::ViewSet;

/// Component switches for the ablation variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Replace every spline transform with an affine map + SiLU.
    pub no_kan: bool,
    /// Drop the attention fusion half of the final embeddings.
    pub no_af: bool,
    /// Drop the KAN fusion half of the final embeddings.
    pub no_kf: bool,
    /// Zero the directed-interaction embeddings.
    pub no_dn: bool,
    /// Zero the co-interaction embeddings.
    pub no_ci: bool,
    /// Zero the similarity embedding.
    pub no_sim: bool,
}

impl Ablation {
    pub const FLAGS: [&'static str; 6] = ["no_kan", "no_af", "no_kf", "no_dn", "no_ci", "no_sim"];

    /// Short tag, e.g. `full` or `no_kan+no_sim`.
    pub fn tag(&self) -> String {
        let on: Vec<&str> = Self::FLAGS
            .iter()
            .zip(self.as_array())
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect();
        if on.is_empty() {
            "full".into()
        } else {
            on.join("+")
        }
    }

    pub fn as_array(&self) -> [bool; 6] {
        [self.no_kan, self.no_af, self.no_kf, self.no_dn, self.no_ci, self.no_sim]
    }

    /// Single-flag variant by flag name.
    pub fn single(flag: &str) -> Option<Self> {
        let mut a = Self::default();
        match flag {
            "no_kan" => a.no_kan = true,
            "no_af" => a.no_af = true,
            "no_kf" => a.no_kf = true,
            "no_dn" => a.no_dn = true,
            "no_ci" => a.no_ci = true,
            "no_sim" => a.no_sim = true,
            _ => return None,
        }
        Some(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.no_af && self.no_kf {
            return Err(Error::Config(
                "no_af and no_kf together leave nothing to decode".into(),
            ));
        }
        Ok(())
    }
}

/// How node inputs are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// Fixed feature matrix of the given width.
    Features { width: usize },
    /// Trainable `n_drugs x width` embedding table.
    FreeEmbedding { n_drugs: usize, width: usize },
}

impl InputKind {
    pub fn width(&self) -> usize {
        match *self {
            InputKind::Features { width } | InputKind::FreeEmbedding { width, .. } => width,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input: InputKind,
    pub hidden: usize,
    pub layers: usize,
    pub spline: SplineSettings,
    pub attention: AttentionMode,
    pub ablation: Ablation,
    /// Direction-blind control: one shared pipeline for both roles and a
    /// symmetric `M`. Pair with [`ViewSet::build_symmetric`].
    pub symmetric: bool,
}

impl ModelConfig {
    pub fn new(input: InputKind) -> Self {
        Self {
            input,
            hidden: 64,
            layers: 2,
            spline: SplineSettings::default(),
            attention: AttentionMode::PerView,
            ablation: Ablation::default(),
            symmetric: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ablation.validate()?;
        if self.hidden == 0 || self.layers == 0 || self.input.width() == 0 {
            return Err(Error::Config(
                "hidden width, depth and input width must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Width of the final source/target embeddings.
    pub fn embedding_width(&self) -> usize {
        let a = if self.ablation.no_af { 0 } else { self.hidden };
        let k = if self.ablation.no_kf { 0 } else { self.hidden };
        a + k
    }
}

/// One role's fusion parameters.
#[derive(Clone, Debug, PartialEq)]
struct RoleFusion {
    attention: Option<AttentionParams>,
    nonlinear: Option<Transform>,
}

#[derive(Clone, Debug)]
pub struct Mgkan {
    pub config: ModelConfig,
    pub params: ParamStore,
    encoders: ViewEncoders,
    source: RoleFusion,
    target: RoleFusion,
    bilinear: ParamId,
    embedding: Option<ParamId>,
}

/// Nodes produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub roles: RoleEmbeddings,
    pub s: Node,
    pub t: Node,
    pub m: Node,
    pub alpha: Option<Node>,
    pub beta: Option<Node>,
}

/// Trained source/target embeddings and decoder matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub s: DenseMatrix,
    pub t: DenseMatrix,
    pub m: DenseMatrix,
    pub symmetric: bool,
}

impl Embeddings {
    pub fn score(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        if self.symmetric {
            decoder::score_symmetric(&self.s, &self.t, &self.m, pairs)
        } else {
            decoder::score(&self.s, &self.t, &self.m, pairs)
        }
    }
}

fn fusion_transform(
    store: &mut ParamStore,
    name: &str,
    h: usize,
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Transform> {
    Ok(if config.ablation.no_kan {
        Transform::Mlp(AffineSilu::init(store, name, 3 * h, h, rng)?)
    } else {
        Transform::Kan(KanLayerParams::init(store, name, 3 * h, h, &config.spline, rng)?)
    })
}

impl Mgkan {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (h, d) = (config.hidden, config.input.width());
        let ab = config.ablation;
        let use_kan = !ab.no_kan;

        let embedding = match config.input {
            InputKind::FreeEmbedding { n_drugs, width } => {
                let table = DenseMatrix::from_fn(n_drugs, width, |_, _| rng.random_range(-0.5..=0.5));
                Some(store.insert("input.embedding", table)?)
            }
            InputKind::Features { .. } => None,
        };

        let mut stack = |store: &mut ParamStore, name: &str, active: bool| -> Result<Option<GkanStack>> {
            if !active {
                return Ok(None);
            }
            GkanStack::init(store, name, d, h, config.layers, use_kan, &config.spline, &mut rng).map(Some)
        };
        let a_out = stack(&mut store, "enc.dn_out", !ab.no_dn)?;
        let c_out = stack(&mut store, "enc.ci_out", !ab.no_ci)?;
        let (a_in, c_in) = if config.symmetric {
            (a_out.clone(), c_out.clone())
        } else {
            (
                stack(&mut store, "enc.dn_in", !ab.no_dn)?,
                stack(&mut store, "enc.ci_in", !ab.no_ci)?,
            )
        };
        let sim = stack(&mut store, "enc.sim", !ab.no_sim)?;
        let encoders = ViewEncoders {
            a_out,
            a_in,
            c_out,
            c_in,
            sim,
            hidden: h,
        };

        let mut role = |store: &mut ParamStore, name: &str| -> Result<RoleFusion> {
            Ok(RoleFusion {
                attention: if ab.no_af {
                    None
                } else {
                    Some(AttentionParams::init(store, &format!("fuse.{name}.attn"), h, &mut rng)?)
                },
                nonlinear: if ab.no_kf {
                    None
                } else {
                    Some(fusion_transform(store, &format!("fuse.{name}.kan"), h, &config, &mut rng)?)
                },
            })
        };
        let source = role(&mut store, "src")?;
        let target = if config.symmetric {
            source.clone()
        } else {
            role(&mut store, "tgt")?
        };

        let width = config.embedding_width();
        let bound = 1.0 / width as f64;
        let m = DenseMatrix::from_fn(width, width, |_, _| rng.random_range(-bound..=bound));
        let bilinear = store.insert("dec.M", m)?;

        Ok(Self {
            config,
            params: store,
            encoders,
            source,
            target,
            bilinear,
            embedding,
        })
    }

    fn input<'a>(&self, tape: &mut Tape<'a>, features: Option<&DenseMatrix>) -> Result<Node> {
        match (self.embedding, features) {
            (Some(id), _) => Ok(tape.param(&self.params, id)),
            (None, Some(x)) => {
                if x.cols() != self.config.input.width() {
                    return Err(Error::shape(
                        "model input",
                        format!("{} feature columns, model expects {}", x.cols(), self.config.input.width()),
                    ));
                }
                Ok(tape.constant(x.clone()))
            }
            (None, None) => Err(Error::Usage("model needs a feature matrix".into())),
        }
    }

    fn fuse_role<'a>(
        &self,
        tape: &mut Tape<'a>,
        fusion: &RoleFusion,
        views: [Node; 3],
    ) -> Result<(Node, Option<Node>)> {
        let attn = match &fusion.attention {
            Some(p) => Some(attention_fuse(tape, &self.params, views, p, self.config.attention)?),
            None => None,
        };
        let nl = match &fusion.nonlinear {
            Some(t) => Some(kan_fuse(tape, &self.params, views, t, &self.config.spline)?),
            None => None,
        };
        let out = assemble(tape, attn.map(|a| a.embedding), nl)?;
        Ok((out, attn.map(|a| a.weights)))
    }

    /// Records the forward pass; `features` may be `None` for a model with a
    /// free embedding table.
    pub fn forward<'a>(
        &self,
        tape: &mut Tape<'a>,
        views: &'a ViewSet,
        features: Option<&DenseMatrix>,
    ) -> Result<Forward> {
        let x = self.input(tape, features)?;
        let roles = if self.config.symmetric {
            // the target pipeline is the source pipeline; reuse its nodes
            let mut enc = self.encoders.clone();
            enc.a_in = None;
            enc.c_in = None;
            let mut r = encode_views(tape, &self.params, views, x, &enc, &self.config.spline)?;
            r.t_n = r.s_n;
            r.t_c = r.s_c;
            r
        } else {
            encode_views(tape, &self.params, views, x, &self.encoders, &self.config.spline)?
        };
        let (s, alpha) = self.fuse_role(tape, &self.source, [roles.s_n, roles.s_c, roles.z_s])?;
        let (t, beta) = if self.config.symmetric {
            (s, alpha)
        } else {
            self.fuse_role(tape, &self.target, [roles.t_n, roles.t_c, roles.z_s])?
        };
        let raw_m = tape.param(&self.params, self.bilinear);
        let m = if self.config.symmetric {
            let mt = tape.transpose(raw_m);
            let sum = tape.add(raw_m, mt)?;
            tape.scale(sum, 0.5)
        } else {
            raw_m
        };
        Ok(Forward {
            roles,
            s,
            t,
            m,
            alpha,
            beta,
        })
    }

    /// Records the mean BCE over `pairs` with 0/1 `labels`.
    pub fn loss<'a>(
        &self,
        tape: &mut Tape<'a>,
        fwd: &Forward,
        pairs: &[(usize, usize)],
        labels: &[f64],
    ) -> Result<Node> {
        let p = decoder::score_on_tape(tape, fwd.s, fwd.t, fwd.m, pairs, self.config.symmetric)?;
        tape.bce(p, labels.to_vec(), decoder::PROB_EPS)
    }

    /// Full loss value for the current parameters.
    pub fn loss_value(
        &self,
        views: &ViewSet,
        features: Option<&DenseMatrix>,
        pairs: &[(usize, usize)],
        labels: &[f64],
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, views, features)?;
        let loss = self.loss(&mut tape, &fwd, pairs, labels)?;
        Ok(tape.value(loss).item())
    }

    /// Evaluates the model without keeping the tape.
    pub fn embed(&self, views: &ViewSet, features: Option<&DenseMatrix>) -> Result<Embeddings> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, views, features)?;
        Ok(Embeddings {
            s: tape.value(fwd.s).clone(),
            t: tape.value(fwd.t).clone(),
            m: tape.value(fwd.m).clone(),
            symmetric: self.config.symmetric,
        })
    }

    /// Parameter names and shapes in store order.
    pub fn signature(&self) -> Vec<(String, (usize, usize))> {
        self.params
            .iter()
            .map(|t| (t.name.clone(), t.value.shape()))
            .collect()
    }
}
