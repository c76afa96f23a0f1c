use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// One named parameter. Vectors are stored as `1 x n` matrices; `shape`
/// keeps the logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Array2<f64>,
    /// Running batch-norm statistics are stored but not trained.
    pub trainable: bool,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, name: String, shape: Vec<usize>, data: Array2<f64>, trainable: bool) -> usize {
        debug_assert!(!self.index.contains_key(&name), "duplicate tensor {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.tensors.push(Tensor {
            name,
            shape,
            data,
            trainable,
        });
        id
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Array2<f64> {
        &self.tensors[id].data
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Array2<f64> {
        &mut self.tensors[id].data
    }

    pub(crate) fn vector(&self, id: usize) -> ArrayView1<'_, f64> {
        self.tensors[id].data.row(0)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.tensors[i])
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.trainable).map(Tensor::len).sum()
    }

    /// Overwrites every tensor with the same-named tensor of `other`.
    /// Names and shapes must match exactly.
    pub fn load_from(&mut self, other: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        if other.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                other.len()
            )));
        }
        for (name, shape, values) in other {
            let id = self
                .id(name)
                .ok_or_else(|| Error::Invalid(format!("unknown tensor {name}")))?;
            let t = &mut self.tensors[id];
            if &t.shape != shape || values.len() != t.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {name}: expected shape {:?}, got {:?}",
                    t.shape, shape
                )));
            }
            for (d, &v) in t.data.iter_mut().zip(values) {
                *d = v;
            }
        }
        Ok(())
    }

    /// Zero tensors aligned with this store.
    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.tensors.iter().map(|t| Array2::zeros(t.data.raw_dim())).collect()
    }
}
