use crate::error::{Result, TensorError};
use crate::param::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: kind, learning rate, Adam moments and the step counter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    weight_decay: f64,
    adam: AdamHyper,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            weight_decay: 0.0,
            adam: AdamHyper::default(),
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    /// L2 penalty folded into the gradient (`g + λ·θ`); zero by default.
    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_adam_hyper(mut self, adam: AdamHyper) -> Self {
        self.adam = adam;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.learning_rate = learning_rate;
    }

    /// Apply one update from the accumulated gradients, then zero them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if !params.grads_ready() {
            return Err(TensorError::Usage(
                "optimizer step without gradients; run backward first".into(),
            ));
        }
        if self.kind == OptimizerKind::Adam && self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros(p.value().shape())).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.kind == OptimizerKind::Adam && self.first_moment.len() != params.len() {
            return Err(TensorError::Usage(
                "optimizer state was built for a different parameter set".into(),
            ));
        }
        self.step += 1;
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let grad = p.grad().clone();
                    for (v, g) in p.value_mut().data_mut().iter_mut().zip(grad.data()) {
                        *v -= lr * (g + wd * *v);
                    }
                }
            }
            OptimizerKind::Adam => {
                let AdamHyper {
                    beta1,
                    beta2,
                    epsilon,
                } = self.adam;
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, m), s) in params
                    .iter_mut()
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    if m.shape() != p.value().shape() {
                        return Err(TensorError::Usage(format!(
                            "moment shape {:?} does not match parameter {:?}",
                            m.shape(),
                            p.name()
                        )));
                    }
                    let grad = p.grad().clone();
                    let values = p.value_mut().data_mut();
                    for (((v, g), mi), si) in values
                        .iter_mut()
                        .zip(grad.data())
                        .zip(m.data_mut())
                        .zip(s.data_mut())
                    {
                        let g = g + wd * *v;
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *si = beta2 * *si + (1.0 - beta2) * g * g;
                        let m_hat = *mi / c1;
                        let s_hat = *si / c2;
                        *v -= lr * m_hat / (s_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        params.zero_grads();
        Ok(())
    }
}
