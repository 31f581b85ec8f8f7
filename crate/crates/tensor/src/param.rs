use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Index of a [`Parameter`] inside its owning [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub(crate) fn grad_mut(&mut self) -> &mut Tensor {
        &mut self.grad
    }
}

/// Ordered collection of named parameters.
///
/// Gradients are accumulated by [`Graph::backward`](crate::Graph::backward) and
/// consumed (then zeroed) by an optimizer step. `grads_ready` tracks whether a
/// backward pass has run since the last step.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    grads_ready: bool,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
        self.grads_ready = false;
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub(crate) fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    /// Overwrite parameter values from `(name, tensor)` pairs, matching by name
    /// and shape.
    pub fn load_values(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(TensorError::Format(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                values.len()
            )));
        }
        for (name, tensor) in values {
            let id = self
                .find(&name)
                .ok_or_else(|| TensorError::Format(format!("unknown parameter {name:?}")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != tensor.shape() {
                return Err(TensorError::Format(format!(
                    "parameter {name:?} has shape {:?}, checkpoint holds {:?}",
                    p.value.shape(),
                    tensor.shape()
                )));
            }
            p.value = tensor;
        }
        self.zero_grads();
        Ok(())
    }
}
