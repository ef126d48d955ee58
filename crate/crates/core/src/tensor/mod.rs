//! Dense double-precision tensors with a reverse-mode gradient tape.
//!
//! Parameters live in [`Tensor`] values owned by the model. A forward pass
//! registers them on a fresh [`Tape`] as leaves, records every primitive, and
//! [`Tape::backward`] replays the records in reverse to produce [`Gradients`].
//! Nothing on the tape is ever mutated in place.

mod adam;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{softmax_with_temperature, Gradients, Reduce, Tape, Var};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

/// Row-major `f64` array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default)]
    requires_grad: bool,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default)]
    requires_grad: bool,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        let mut t = Tensor::new(raw.shape, raw.data)?;
        t.requires_grad = raw.requires_grad;
        Ok(t)
    }
}

impl Tensor {
    /// Builds a tensor, checking extents, length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(invalid_arg!("tensor extents must be positive, got {shape:?}"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(invalid_arg!(
                "shape {shape:?} holds {numel} values but {} were given",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![value])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Marks the tensor as a trainable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(invalid_arg!(
                "gradient of length {} for tensor of shape {:?}",
                grad.len(),
                self.shape
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Replaces the values, keeping the shape. Used by optimizers between
    /// tapes, never while a tape refers to the tensor.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    /// Stable hash of the shape and the exact bit patterns of the values.
    pub fn fingerprint(&self, hasher: &mut impl sha2::Digest) {
        hasher.update((self.shape.len() as u64).to_le_bytes());
        for &d in &self.shape {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in &self.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
}
