//! Dense and sparse matrices, the differentiation tape and Adam.

pub mod adam;
pub mod dense;
pub mod params;
pub mod sparse;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use dense::DenseMatrix;
pub use params::{ParamId, ParamStore, ParamTensor};
pub use sparse::SparseMatrix;
pub use tape::{Node, Tape};
