use std::collections::BTreeMap;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named learnable tensor and its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

/// Ordered collection of learnable tensors. Insertion order is the
/// canonical order used by optimizers and checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Construction(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.tensors.len());
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        self.by_name.insert(name.clone(), id);
        self.tensors.push(ParamTensor { name, value, grad });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.tensors[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &DenseMatrix {
        &self.tensors[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors
            .iter()
            .map(|t| t.value.rows() * t.value.cols())
            .sum()
    }

    /// Snapshot of all parameter values, in store order.
    pub fn values_snapshot(&self) -> Vec<DenseMatrix> {
        self.tensors.iter().map(|t| t.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[DenseMatrix]) -> Result<()> {
        if values.len() != self.tensors.len() {
            return Err(Error::Usage("snapshot has a different parameter count".into()));
        }
        for (t, v) in self.tensors.iter_mut().zip(values) {
            if t.value.shape() != v.shape() {
                return Err(Error::Usage(format!("snapshot shape differs for {}", t.name)));
            }
            t.value = v.clone();
        }
        Ok(())
    }
}
