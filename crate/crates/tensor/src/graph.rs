//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operator applied during a forward pass. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients into the [`ParamSet`] that supplied the parameters.
//!
//! Every operator checks its output for NaN/Inf and fails with
//! [`TensorError::NonFinite`] rather than letting the value propagate.

use crate::error::{Result, TensorError};
use crate::linalg::{col2im_add, gemm, im2col, ConvGeom};
use crate::param::{ParamId, ParamSet};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Branch decisions taken by the piecewise operators (ReLU masks and max-pool
/// winners) during one forward pass, in recording order.
///
/// Replaying a pattern evaluates the graph as the smooth function that agrees
/// with the original one on the recorded linear region. Gradient checks use it
/// to difference across perturbations that would otherwise straddle a kink.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActivationPattern {
    pub relu: Vec<Vec<bool>>,
    pub pool: Vec<Vec<usize>>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Affine {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu {
        input: Var,
        mask: Vec<bool>,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reshape {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    Mse {
        prediction: Var,
        target: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
struct Replay {
    pattern: ActivationPattern,
    relu_next: usize,
    pool_next: usize,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    replay: Option<Replay>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph whose ReLU and max-pool operators follow `pattern` instead of
    /// deciding from their inputs.
    pub fn with_pattern(pattern: ActivationPattern) -> Self {
        Self {
            nodes: Vec::new(),
            replay: Some(Replay {
                pattern,
                relu_next: 0,
                pool_next: 0,
            }),
        }
    }

    /// The branch decisions recorded so far.
    pub fn pattern(&self) -> ActivationPattern {
        let mut pattern = ActivationPattern::default();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { mask, .. } => pattern.relu.push(mask.clone()),
                Op::MaxPool { argmax, .. } => pattern.pool.push(argmax.clone()),
                _ => {}
            }
        }
        pattern
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        check_finite("input", &value)?;
        Ok(self.push(value, Op::Input, false))
    }

    /// Leaf holding the current value of a parameter.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Result<Var> {
        if id.0 >= params.len() {
            return Err(TensorError::Usage(format!("parameter {} out of range", id.0)));
        }
        let value = params.get(id).value().clone();
        check_finite("param", &value)?;
        Ok(self.push(value, Op::Param(id), true))
    }

    /// Valid-padding 2-D cross-correlation.
    ///
    /// `input` is (N, C, H, W), `weight` is (O, C, KH, KW), `bias` is (O). The
    /// output is (N, O, ⌊(H−KH)/s⌋+1, ⌊(W−KW)/s⌋+1).
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize) -> Result<Var> {
        let xs = self.value(input).shape();
        let ws = self.value(weight).shape();
        let bs = self.value(bias).shape();
        if stride == 0 {
            return Err(TensorError::Shape("conv2d stride must be at least 1".into()));
        }
        if xs.len() != 4 || ws.len() != 4 {
            return Err(TensorError::Shape(format!(
                "conv2d expects 4-d input and weight, got {xs:?} and {ws:?}"
            )));
        }
        if xs[1] != ws[1] {
            return Err(TensorError::Shape(format!(
                "conv2d input has {} channels, weight expects {}",
                xs[1], ws[1]
            )));
        }
        if bs != [ws[0]] {
            return Err(TensorError::Shape(format!(
                "conv2d bias shape {bs:?} does not match {} output channels",
                ws[0]
            )));
        }
        if xs[2] < ws[2] || xs[3] < ws[3] {
            return Err(TensorError::Shape(format!(
                "conv2d kernel {}x{} larger than input {}x{}",
                ws[2], ws[3], xs[2], xs[3]
            )));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_channels: xs[1],
            in_h: xs[2],
            in_w: xs[3],
            out_channels: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            out_h: (xs[2] - ws[2]) / stride + 1,
            out_w: (xs[3] - ws[3]) / stride + 1,
        };
        let cols = im2col(self.value(input).data(), &geom);
        let o = geom.out_channels;
        let np = geom.columns();
        let mut m = vec![0.0; o * np];
        gemm(
            o,
            geom.patch_len(),
            np,
            self.value(weight).data(),
            false,
            &cols,
            false,
            &mut m,
            0.0,
        );
        let p = geom.out_pixels();
        let b = self.value(bias).data();
        let mut out = vec![0.0; geom.batch * o * p];
        for n in 0..geom.batch {
            for oc in 0..o {
                let src = &m[oc * np + n * p..][..p];
                let dst = &mut out[(n * o + oc) * p..][..p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + b[oc];
                }
            }
        }
        let value = Tensor::new(vec![geom.batch, o, geom.out_h, geom.out_w], out)?;
        check_finite("conv2d", &value)?;
        let rg = self.grad_flag(&[input, weight, bias]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// `input · weightᵀ + bias` with `input` (N, IN), `weight` (OUT, IN),
    /// `bias` (OUT).
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.value(input).shape();
        let ws = self.value(weight).shape();
        let bs = self.value(bias).shape();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(TensorError::Shape(format!(
                "affine shapes incompatible: input {xs:?}, weight {ws:?}, bias {bs:?}"
            )));
        }
        let (n, fan_in, fan_out) = (xs[0], xs[1], ws[0]);
        let mut out = vec![0.0; n * fan_out];
        for row in out.chunks_mut(fan_out.max(1)) {
            row.copy_from_slice(self.value(bias).data());
        }
        gemm(
            n,
            fan_in,
            fan_out,
            self.value(input).data(),
            false,
            self.value(weight).data(),
            true,
            &mut out,
            1.0,
        );
        let value = Tensor::new(vec![n, fan_out], out)?;
        check_finite("affine", &value)?;
        let rg = self.grad_flag(&[input, weight, bias]);
        Ok(self.push(
            value,
            Op::Affine {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let n = self.value(input).len();
        let replayed = match &mut self.replay {
            Some(r) => {
                let m = r.pattern.relu.get(r.relu_next).cloned().ok_or_else(|| {
                    TensorError::Usage("activation pattern has too few relu masks".into())
                })?;
                r.relu_next += 1;
                if m.len() != n {
                    return Err(TensorError::Usage("replayed relu mask has wrong size".into()));
                }
                Some(m)
            }
            None => None,
        };
        let x = self.value(input);
        let mask = replayed.unwrap_or_else(|| x.data().iter().map(|&v| v > 0.0).collect());
        let data = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &on)| if on { v } else { 0.0 })
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Relu { input, mask }, rg))
    }

    /// Non-overlapping max pooling over `window × window` tiles of an
    /// (N, C, H, W) tensor; trailing rows/columns that do not fill a tile are
    /// dropped.
    pub fn max_pool(&mut self, input: Var, window: usize) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        if xs.len() != 4 || window == 0 || xs[2] < window || xs[3] < window {
            return Err(TensorError::Shape(format!(
                "max_pool window {window} incompatible with input {xs:?}"
            )));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / window, w / window);
        let replayed = match &mut self.replay {
            Some(r) => {
                let a = r.pattern.pool.get(r.pool_next).cloned().ok_or_else(|| {
                    TensorError::Usage("activation pattern has too few pool entries".into())
                })?;
                r.pool_next += 1;
                if a.len() != n * c * oh * ow {
                    return Err(TensorError::Usage("replayed pool entry has wrong size".into()));
                }
                Some(a)
            }
            None => None,
        };
        let x = self.value(input).data();
        let argmax: Vec<usize> = match replayed {
            Some(a) => a,
            None => {
                let mut argmax = Vec::with_capacity(n * c * oh * ow);
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + oy * window * w + ox * window;
                            for i in 0..window {
                                for j in 0..window {
                                    let idx = base + (oy * window + i) * w + ox * window + j;
                                    if x[idx] > x[best] {
                                        best = idx;
                                    }
                                }
                            }
                            argmax.push(best);
                        }
                    }
                }
                argmax
            }
        };
        let data = argmax.iter().map(|&i| x[i]).collect();
        let value = Tensor::new(vec![n, c, oh, ow], data)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(value, Op::MaxPool { input, argmax }, rg))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| TensorError::Shape("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::Shape(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::Shape(format!(
                    "concat along axis {axis}: {s:?} incompatible with {base:?}"
                )));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        let rg = self.grad_flag(inputs);
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Reshape { input }, rg))
    }

    /// Collapse every axis after the first: (N, …) → (N, ∏…).
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).shape();
        if s.is_empty() {
            return Err(TensorError::Shape("cannot flatten a scalar".into()));
        }
        let n = s[0];
        let rest = s[1..].iter().product();
        self.reshape(input, &[n, rest])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y)
            .map(|value| {
                let rg = self.grad_flag(&[a, b]);
                self.push(value, Op::Add { a, b }, rg)
            })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y)
            .map(|value| {
                let rg = self.grad_flag(&[a, b]);
                self.push(value, Op::Mul { a, b }, rg)
            })
    }

    fn elementwise(
        &self,
        a: Var,
        b: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::Shape(format!(
                "{op}: shapes {:?} and {:?} differ",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        check_finite(op, &value)?;
        Ok(value)
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s: f64 = self.value(input).data().iter().sum();
        let value = Tensor::scalar(s);
        check_finite("sum", &value)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Sum { input }, rg))
    }

    /// Mean of squared elementwise differences.
    pub fn mse_loss(&mut self, prediction: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(prediction), self.value(target));
        if p.shape() != t.shape() {
            return Err(TensorError::Shape(format!(
                "mse_loss: prediction {:?} vs target {:?}",
                p.shape(),
                t.shape()
            )));
        }
        if p.is_empty() {
            return Err(TensorError::Shape("mse_loss of empty tensors".into()));
        }
        let sq: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let value = Tensor::scalar(sq / p.len() as f64);
        check_finite("mse_loss", &value)?;
        let rg = self.grad_flag(&[prediction, target]);
        Ok(self.push(value, Op::Mse { prediction, target }, rg))
    }

    /// Reverse pass from a scalar `loss`, accumulating into `params`.
    ///
    /// Parameters not reachable from `loss` keep whatever gradient they held
    /// (zero after an optimizer step).
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    if id.0 >= params.len() {
                        return Err(TensorError::Usage(format!(
                            "parameter {} not in the supplied set",
                            id.0
                        )));
                    }
                    params.get_mut(*id).grad_mut().add_assign(&g);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                    cols,
                } => {
                    let o = geom.out_channels;
                    let p = geom.out_pixels();
                    let np = geom.columns();
                    let mut dm = vec![0.0; o * np];
                    for n in 0..geom.batch {
                        for oc in 0..o {
                            dm[oc * np + n * p..][..p]
                                .copy_from_slice(&g.data()[(n * o + oc) * p..][..p]);
                        }
                    }
                    if self.nodes[weight.0].requires_grad {
                        let mut dw = Tensor::zeros(self.value(*weight).shape());
                        gemm(o, np, geom.patch_len(), &dm, false, cols, true, dw.data_mut(), 0.0);
                        accumulate(&mut grads, *weight, dw);
                    }
                    if self.nodes[bias.0].requires_grad {
                        let db: Vec<f64> =
                            dm.chunks(np).map(|row| row.iter().sum()).collect();
                        accumulate(&mut grads, *bias, Tensor::from_vec(db));
                    }
                    if self.nodes[input.0].requires_grad {
                        let mut dcols = vec![0.0; geom.patch_len() * np];
                        gemm(
                            geom.patch_len(),
                            o,
                            np,
                            self.value(*weight).data(),
                            true,
                            &dm,
                            false,
                            &mut dcols,
                            0.0,
                        );
                        let mut dx = Tensor::zeros(self.value(*input).shape());
                        col2im_add(&dcols, geom, dx.data_mut());
                        accumulate(&mut grads, *input, dx);
                    }
                }
                Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let xs = self.value(*input).shape();
                    let (n, fan_in) = (xs[0], xs[1]);
                    let fan_out = self.value(*weight).shape()[0];
                    if self.nodes[input.0].requires_grad {
                        let mut dx = Tensor::zeros(xs);
                        gemm(
                            n,
                            fan_out,
                            fan_in,
                            g.data(),
                            false,
                            self.value(*weight).data(),
                            false,
                            dx.data_mut(),
                            0.0,
                        );
                        accumulate(&mut grads, *input, dx);
                    }
                    if self.nodes[weight.0].requires_grad {
                        let mut dw = Tensor::zeros(&[fan_out, fan_in]);
                        gemm(
                            fan_out,
                            n,
                            fan_in,
                            g.data(),
                            true,
                            self.value(*input).data(),
                            false,
                            dw.data_mut(),
                            0.0,
                        );
                        accumulate(&mut grads, *weight, dw);
                    }
                    if self.nodes[bias.0].requires_grad {
                        let mut db = vec![0.0; fan_out];
                        for row in g.data().chunks(fan_out.max(1)) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *bias, Tensor::from_vec(db));
                    }
                }
                Op::Relu { input, mask } => {
                    let data = g
                        .data()
                        .iter()
                        .zip(mask)
                        .map(|(&v, &on)| if on { v } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::MaxPool { input, argmax } => {
                    let mut dx = Tensor::zeros(self.value(*input).shape());
                    for (&src, &v) in argmax.iter().zip(g.data()) {
                        dx.data_mut()[src] += v;
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::Concat { inputs, axis } => {
                    let shape = g.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let total = shape[*axis];
                    let mut offset = 0;
                    for v in inputs {
                        let vs = self.value(*v).shape();
                        let width = vs[*axis] * inner;
                        if self.nodes[v.0].requires_grad {
                            let mut part = Vec::with_capacity(outer * width);
                            for o in 0..outer {
                                let start = o * total * inner + offset;
                                part.extend_from_slice(&g.data()[start..start + width]);
                            }
                            accumulate(&mut grads, *v, Tensor::new(vs.to_vec(), part)?);
                        }
                        offset += width;
                    }
                }
                Op::Reshape { input } => {
                    let shape = self.value(*input).shape();
                    accumulate(&mut grads, *input, g.clone().reshape(shape)?);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul { a, b } => {
                    let prod = |other: &Tensor| -> Result<Tensor> {
                        let data =
                            g.data().iter().zip(other.data()).map(|(x, y)| x * y).collect();
                        Tensor::new(g.shape().to_vec(), data)
                    };
                    let da = prod(self.value(*b))?;
                    let db = prod(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Sum { input } => {
                    let s = g.item()?;
                    accumulate(&mut grads, *input, Tensor::filled(self.value(*input).shape(), s));
                }
                Op::Mse { prediction, target } => {
                    let s = g.item()?;
                    let (p, t) = (self.value(*prediction), self.value(*target));
                    let k = 2.0 * s / p.len() as f64;
                    let dp: Vec<f64> =
                        p.data().iter().zip(t.data()).map(|(a, b)| k * (a - b)).collect();
                    if self.nodes[target.0].requires_grad {
                        let dt = dp.iter().map(|v| -v).collect();
                        accumulate(&mut grads, *target, Tensor::new(t.shape().to_vec(), dt)?);
                    }
                    accumulate(&mut grads, *prediction, Tensor::new(p.shape().to_vec(), dp)?);
                }
            }
        }
        params.mark_grads_ready();
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_zeroes_negatives() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![-1.0, 0.0, 2.0])).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn identity_affine_is_identity() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 3], &[1., 2., 3., 4., 5., 6.])).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let w = g.input(eye).unwrap();
        let b = g.input(Tensor::zeros(&[3])).unwrap();
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn concat_shapes_add_along_axis() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.input(Tensor::filled(&[2, 5], 1.0)).unwrap();
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 8]);
        assert_eq!(g.value(c).get(&[1, 2]), Some(0.0));
        assert_eq!(g.value(c).get(&[1, 3]), Some(1.0));
        let bad = g.input(Tensor::zeros(&[3, 5])).unwrap();
        assert!(matches!(g.concat(&[a, bad], 1), Err(TensorError::Shape(_))));
    }

    #[test]
    fn conv_identity_kernel() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..16).map(f64::from).collect();
        let x = g.input(t(&[1, 1, 4, 4], &data)).unwrap();
        let w = g.input(t(&[1, 1, 1, 1], &[1.0])).unwrap();
        let b = g.input(t(&[1], &[0.0])).unwrap();
        let y = g.conv2d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);
    }

    #[test]
    fn conv_all_ones() {
        let mut g = Graph::new();
        let x = g.input(Tensor::filled(&[1, 1, 5, 5], 1.0)).unwrap();
        let w = g.input(Tensor::filled(&[1, 1, 3, 3], 1.0)).unwrap();
        let b = g.input(Tensor::zeros(&[1])).unwrap();
        let y = g.conv2d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 3, 3]);
        assert!(g.value(y).data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn conv_output_extent_with_stride() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 3, 32, 32])).unwrap();
        let w = g.input(Tensor::zeros(&[4, 3, 3, 3])).unwrap();
        let b = g.input(Tensor::zeros(&[4])).unwrap();
        let y = g.conv2d(x, w, b, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 4, 15, 15]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 2, 5, 5])).unwrap();
        let w = g.input(Tensor::zeros(&[1, 3, 3, 3])).unwrap();
        let b = g.input(Tensor::zeros(&[1])).unwrap();
        assert!(matches!(g.conv2d(x, w, b, 1), Err(TensorError::Shape(_))));
    }

    #[test]
    fn mse_value() {
        let mut g = Graph::new();
        let p = g.input(Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        let q = g.input(Tensor::from_vec(vec![3.0, 4.0])).unwrap();
        let l = g.mse_loss(p, q).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 12.5);
        let same = g.mse_loss(q, q).unwrap();
        assert_eq!(g.value(same).item().unwrap(), 0.0);
    }

    #[test]
    fn sum_of_parameter_has_unit_gradient() {
        let mut params = ParamSet::new();
        let id = params.add("w", Tensor::from_vec(vec![0.3, -2.0, 5.0]));
        let unused = params.add("unused", Tensor::from_vec(vec![1.0]));
        let mut g = Graph::new();
        let w = g.param(&params, id).unwrap();
        let s = g.sum(w).unwrap();
        g.backward(s, &mut params).unwrap();
        assert_eq!(params.get(id).grad().data(), &[1.0, 1.0, 1.0]);
        assert_eq!(params.get(unused).grad().data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut params = ParamSet::new();
        let id = params.add("w", Tensor::from_vec(vec![1.0, 2.0]));
        let mut g = Graph::new();
        let w = g.param(&params, id).unwrap();
        assert!(matches!(
            g.backward(w, &mut params),
            Err(TensorError::Usage(_))
        ));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::new();
        let a = g.input(Tensor::from_vec(vec![f64::MAX])).unwrap();
        assert!(matches!(g.add(a, a), Err(TensorError::NonFinite { .. })));
        assert!(g.input(Tensor::from_vec(vec![f64::NAN])).is_err());
    }

    #[test]
    fn max_pool_picks_tile_maximum() {
        let mut g = Graph::new();
        let x = g
            .input(t(&[1, 1, 2, 4], &[1., 5., 2., 0., 3., 4., 8., 7.]))
            .unwrap();
        let y = g.max_pool(x, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 2]);
        assert_eq!(g.value(y).data(), &[5.0, 8.0]);
    }

    #[test]
    fn replayed_pattern_reproduces_forward() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![-1.0, 2.0, 0.5])).unwrap();
        let y = g.relu(x).unwrap();
        let pattern = g.pattern();
        let mut h = Graph::with_pattern(pattern);
        let x2 = h.input(Tensor::from_vec(vec![-1.0, 2.0, 0.5])).unwrap();
        let y2 = h.relu(x2).unwrap();
        assert_eq!(g.value(y), h.value(y2));
        // with the recorded mask a now-positive first entry stays switched off
        let mut k = Graph::with_pattern(g.pattern());
        let x3 = k.input(Tensor::from_vec(vec![1.0, 2.0, 0.5])).unwrap();
        let y3 = k.relu(x3).unwrap();
        assert_eq!(k.value(y3).data(), &[0.0, 2.0, 0.5]);
    }
}
