//! B-spline KAN transforms and graph KAN encoders.

pub mod encoder;
pub mod layer;
pub mod spline;

pub use encoder::{encode_views, gkan_layer, GkanLayer, GkanStack, RoleEmbeddings, ViewEncoders};
pub use layer::{kan_transform, AffineSilu, KanLayerParams, SplineMap, SplineSettings, Transform};
pub use spline::{bspline_basis, SplineGrid};
