//! Dense f32 tensors and the parameter store that owns all learnable state.

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major f32 tensor. The gradient buffer exists exactly when
/// `requires_grad` is set and always matches `data` in length.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidArg(format!(
                "tensor shape {:?} expects {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    /// Trainable tensor: gradient buffer allocated and zeroed.
    pub fn param(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let mut t = Tensor::from_vec(shape, data)?;
        t.requires_grad = true;
        t.grad = Some(vec![0.0; t.data.len()]);
        Ok(t)
    }

    /// Trainable tensor initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn uniform_param<R: Rng>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect();
        Tensor::param(shape, data).expect("shape/data length consistent by construction")
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn assert_finite(&self, ctx: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericFault { op: ctx })
        }
    }
}

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Owns every learnable tensor of a model. Registration order is the canonical
/// parameter order used by the optimizer, checkpoints and gradient checks.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        if tensor.grad.is_none() {
            tensor.requires_grad = true;
            tensor.grad = Some(vec![0.0; tensor.data.len()]);
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.into());
        self.tensors.push(tensor);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Add `grad` into the stored gradient of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f32]) -> Result<()> {
        let name = self.names[id.0].clone();
        let t = &mut self.tensors[id.0];
        let buf = t.grad.as_mut().ok_or(Error::MissingGrad { name })?;
        if buf.len() != grad.len() {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                lhs: t.shape.clone(),
                rhs: vec![grad.len()],
            });
        }
        for (b, g) in buf.iter_mut().zip(grad) {
            *b += g;
        }
        Ok(())
    }
}
