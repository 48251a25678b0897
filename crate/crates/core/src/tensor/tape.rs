//! The gradient tape: operation recording and the reverse pass.

use std::sync::Arc;

use crate::error::{CoreError, Result};

use super::conv::{bilinear_backward, bilinear_forward, conv2d_backward, conv2d_forward, BilinearMeta};
use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    ScalarMul(Var, f64),
    AddConst(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize, len: usize },
    Reshape(Var),
    /// Softmax over all elements of the operand (caller scales by 1/T first).
    Softmax(Var),
    Dot(Var, Var),
    L2Norm(Var),
    Conv2d { input: Var, weight: Var, bias: Var, stride: usize, pad: usize },
    BilinearSample { map: Var, xy: Var, meta: BilinearMeta },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by node handle.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` was reached by the reverse pass.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient or zeros for detached nodes. The flag is true when the node
    /// was never reached (detached from the loss).
    pub fn get_or_zero(&self, tape: &Tape, v: Var) -> (Tensor, bool) {
        match self.get(v) {
            Some(g) => (g.clone(), false),
            None => (Tensor::zeros(tape.shape(v)), true),
        }
    }
}

/// Records primitive operations for one forward pass.
///
/// Nodes are appended in execution order, so parents always precede
/// children and the reverse pass is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor (parameter or constant) as a tape leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn values(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.values()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check_same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(CoreError::ShapeMismatch {
                op: op.into(),
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &str) -> Result<Var> {
        self.check_same_shape(name, a, b)?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, values: Arc::new(values) }, op))
    }

    fn map_elementwise(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let values = self.values(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor { shape, values: Arc::new(values) }, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_elementwise(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_elementwise(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_elementwise(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_elementwise(a, b, |x, y| x / y, Op::Div(a, b), "div")
    }

    /// Matrix product: `[m,k]x[k,n] -> [m,n]` or `[m,k]x[k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || CoreError::ShapeMismatch { op: "matmul".into(), lhs: sa.clone(), rhs: sb.clone() };
        if sa.len() != 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[0], sa[1]);
        let (va, vb) = (self.values(a), self.values(b));
        let (out_shape, values) = match sb.len() {
            1 => {
                if sb[0] != k {
                    return Err(mismatch());
                }
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let row = &va[i * k..(i + 1) * k];
                    out[i] = row.iter().zip(vb).map(|(&x, &y)| x * y).sum();
                }
                (vec![m], out)
            }
            2 => {
                if sb[0] != k {
                    return Err(mismatch());
                }
                let n = sb[1];
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let x = va[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        let brow = &vb[p * n..(p + 1) * n];
                        let orow = &mut out[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += x * brow[j];
                        }
                    }
                }
                (vec![m, n], out)
            }
            _ => return Err(mismatch()),
        };
        Ok(self.push(Tensor { shape: out_shape, values: Arc::new(values) }, Op::MatMul(a, b)))
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        self.map_elementwise(a, |x| x * c, Op::ScalarMul(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.map_elementwise(a, |x| x + c, Op::AddConst(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scalar_mul(a, -1.0)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.values(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.values(a).len().max(1) as f64;
        let s: f64 = self.values(a).iter().sum();
        self.push(Tensor::scalar(s / n), Op::Mean(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map_elementwise(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map_elementwise(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map_elementwise(a, f64::exp, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_elementwise(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_elementwise(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Concatenate 1-D tensors into one 1-D tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::ShapeMismatch { op: "concat".into(), lhs: vec![0], rhs: vec![0] });
        }
        let mut values = Vec::new();
        for &p in parts {
            values.extend_from_slice(self.values(p));
        }
        Ok(self.push(Tensor::from_vec(values), Op::Concat(parts.to_vec())))
    }

    /// Contiguous slice of the flattened operand, reinterpreted under `shape`.
    pub fn slice(&mut self, src: Var, start: usize, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        let total = self.values(src).len();
        if start + len > total {
            return Err(CoreError::ShapeMismatch {
                op: "slice".into(),
                lhs: self.shape(src).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let values = self.values(src)[start..start + len].to_vec();
        Ok(self.push(
            Tensor { shape: shape.to_vec(), values: Arc::new(values) },
            Op::Slice { src, start, len },
        ))
    }

    pub fn reshape(&mut self, src: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(src).reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(src)))
    }

    /// Numerically stable softmax over all elements of the operand.
    pub fn softmax(&mut self, a: Var) -> Var {
        let vals = self.values(a);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = vals.iter().map(|&x| (x - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let values: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor { shape, values: Arc::new(values) }, Op::Softmax(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("dot", a, b)?;
        let s: f64 = self.values(a).iter().zip(self.values(b)).map(|(&x, &y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    pub fn l2_norm(&mut self, a: Var) -> Var {
        let n: f64 = self.values(a).iter().map(|&x| x * x).sum::<f64>().sqrt();
        self.push(Tensor::scalar(n), Op::L2Norm(a))
    }

    /// 2-D convolution: input `[C,H,W]`, weight `[O,C,k,k]`, bias `[O]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = conv2d_forward(self.value(input), self.value(weight), self.value(bias), stride, pad)?;
        Ok(self.push(out, Op::Conv2d { input, weight, bias, stride, pad }))
    }

    /// Bilinear sample of a `[C,h,w]` map at continuous grid coordinates
    /// `xy = [x, y]`. Coordinates outside the grid are clamped; the returned
    /// flag is true when clamping occurred.
    pub fn bilinear_sample(&mut self, map: Var, xy: Var) -> Result<(Var, bool)> {
        let (out, meta) = bilinear_forward(self.value(map), self.value(xy))?;
        let clamped = meta.clamped_x || meta.clamped_y;
        let v = self.push(out, Op::BilinearSample { map, xy, meta });
        Ok((v, clamped))
    }

    /// Reverse pass from a scalar loss node.
    ///
    /// Each node is visited exactly once, in reverse recording order.
    /// Leaves that were never reached stay without a gradient; callers can
    /// detect them through [`Gradients::get_or_zero`].
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(CoreError::NonScalarLoss { shape: self.shape(loss).to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(up) = grads[idx].take() else { continue };
            self.accumulate(idx, &up, &mut grads);
            grads[idx] = Some(up);
        }

        let out = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|values| Tensor {
                    shape: self.nodes[i].value.shape().to_vec(),
                    values: Arc::new(values),
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn grad_slot<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> &'a mut Vec<f64> {
        let n = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    fn accumulate(&self, idx: usize, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (g, &u) in self.grad_slot(grads, *a).iter_mut().zip(up) {
                    *g += u;
                }
                for (g, &u) in self.grad_slot(grads, *b).iter_mut().zip(up) {
                    *g += u;
                }
            }
            Op::Sub(a, b) => {
                for (g, &u) in self.grad_slot(grads, *a).iter_mut().zip(up) {
                    *g += u;
                }
                for (g, &u) in self.grad_slot(grads, *b).iter_mut().zip(up) {
                    *g -= u;
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let bv = self.nodes[b.0].value.values_arc();
                for ((g, &u), &y) in self.grad_slot(grads, a).iter_mut().zip(up).zip(bv.iter()) {
                    *g += u * y;
                }
                let av = self.nodes[a.0].value.values_arc();
                for ((g, &u), &x) in self.grad_slot(grads, b).iter_mut().zip(up).zip(av.iter()) {
                    *g += u * x;
                }
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.values_arc();
                let bv = self.nodes[b.0].value.values_arc();
                for ((g, &u), &y) in self.grad_slot(grads, a).iter_mut().zip(up).zip(bv.iter()) {
                    *g += u / y;
                }
                for (((g, &u), &x), &y) in
                    self.grad_slot(grads, b).iter_mut().zip(up).zip(av.iter()).zip(bv.iter())
                {
                    *g -= u * x / (y * y);
                }
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let sa = self.nodes[a.0].value.shape().to_vec();
                let sb = self.nodes[b.0].value.shape().to_vec();
                let (m, k) = (sa[0], sa[1]);
                let av = self.nodes[a.0].value.values_arc();
                let bv = self.nodes[b.0].value.values_arc();
                if sb.len() == 1 {
                    // y = A x: dA = u xT, dx = AT u
                    {
                        let ga = self.grad_slot(grads, a);
                        for i in 0..m {
                            for p in 0..k {
                                ga[i * k + p] += up[i] * bv[p];
                            }
                        }
                    }
                    let gb = self.grad_slot(grads, b);
                    for i in 0..m {
                        for p in 0..k {
                            gb[p] += av[i * k + p] * up[i];
                        }
                    }
                } else {
                    let n = sb[1];
                    // Y = A B: dA = U BT, dB = AT U
                    {
                        let ga = self.grad_slot(grads, a);
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += up[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    let gb = self.grad_slot(grads, b);
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += av[i * k + p] * up[i * n + j];
                            }
                            gb[p * n + j] += acc;
                        }
                    }
                }
            }
            Op::ScalarMul(a, c) => {
                let c = *c;
                for (g, &u) in self.grad_slot(grads, *a).iter_mut().zip(up) {
                    *g += u * c;
                }
            }
            Op::AddConst(a) => {
                for (g, &u) in self.grad_slot(grads, *a).iter_mut().zip(up) {
                    *g += u;
                }
            }
            Op::Sum(a) => {
                let u = up[0];
                for g in self.grad_slot(grads, *a).iter_mut() {
                    *g += u;
                }
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len().max(1) as f64;
                let u = up[0] / n;
                for g in self.grad_slot(grads, *a).iter_mut() {
                    *g += u;
                }
            }
            Op::Square(a) => {
                let a = *a;
                let av = self.nodes[a.0].value.values_arc();
                for ((g, &u), &x) in self.grad_slot(grads, a).iter_mut().zip(up).zip(av.iter()) {
                    *g += 2.0 * x * u;
                }
            }
            Op::Sqrt(a) => {
                let a = *a;
                let yv = self.nodes[idx].value.values_arc();
                for ((g, &u), &y) in self.grad_slot(grads, a).iter_mut().zip(up).zip(yv.iter()) {
                    *g += 0.5 * u / y;
                }
            }
            Op::Exp(a) => {
                let a = *a;
                let yv = self.nodes[idx].value.values_arc();
                for ((g, &u), &y) in self.grad_slot(grads, a).iter_mut().zip(up).zip(yv.iter()) {
                    *g += u * y;
                }
            }
            Op::Tanh(a) => {
                let a = *a;
                let yv = self.nodes[idx].value.values_arc();
                for ((g, &u), &y) in self.grad_slot(grads, a).iter_mut().zip(up).zip(yv.iter()) {
                    *g += u * (1.0 - y * y);
                }
            }
            Op::Relu(a) => {
                let a = *a;
                let av = self.nodes[a.0].value.values_arc();
                for ((g, &u), &x) in self.grad_slot(grads, a).iter_mut().zip(up).zip(av.iter()) {
                    if x > 0.0 {
                        *g += u;
                    }
                }
            }
            Op::Concat(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    for (g, &u) in self.grad_slot(grads, p).iter_mut().zip(&up[offset..offset + len]) {
                        *g += u;
                    }
                    offset += len;
                }
            }
            Op::Slice { src, start, len } => {
                let (src, start, len) = (*src, *start, *len);
                let gs = self.grad_slot(grads, src);
                for (g, &u) in gs[start..start + len].iter_mut().zip(up) {
                    *g += u;
                }
            }
            Op::Reshape(a) => {
                for (g, &u) in self.grad_slot(grads, *a).iter_mut().zip(up) {
                    *g += u;
                }
            }
            Op::Softmax(a) => {
                let a = *a;
                let yv = self.nodes[idx].value.values_arc();
                let inner: f64 = up.iter().zip(yv.iter()).map(|(&u, &y)| u * y).sum();
                for ((g, &u), &y) in self.grad_slot(grads, a).iter_mut().zip(up).zip(yv.iter()) {
                    *g += y * (u - inner);
                }
            }
            Op::Dot(a, b) => {
                let (a, b) = (*a, *b);
                let u = up[0];
                let bv = self.nodes[b.0].value.values_arc();
                for (g, &y) in self.grad_slot(grads, a).iter_mut().zip(bv.iter()) {
                    *g += u * y;
                }
                let av = self.nodes[a.0].value.values_arc();
                for (g, &x) in self.grad_slot(grads, b).iter_mut().zip(av.iter()) {
                    *g += u * x;
                }
            }
            Op::L2Norm(a) => {
                let a = *a;
                let n = self.nodes[idx].value.item();
                if n > 1e-300 {
                    let u = up[0] / n;
                    let av = self.nodes[a.0].value.values_arc();
                    for (g, &x) in self.grad_slot(grads, a).iter_mut().zip(av.iter()) {
                        *g += u * x;
                    }
                }
            }
            Op::Conv2d { input, weight, bias, stride, pad } => {
                let (input, weight, bias, stride, pad) = (*input, *weight, *bias, *stride, *pad);
                let iv = self.nodes[input.0].value.clone();
                let wv = self.nodes[weight.0].value.clone();
                let (gi, gw, gb) = conv2d_backward(&iv, &wv, up, stride, pad);
                for (g, u) in self.grad_slot(grads, input).iter_mut().zip(gi) {
                    *g += u;
                }
                for (g, u) in self.grad_slot(grads, weight).iter_mut().zip(gw) {
                    *g += u;
                }
                for (g, u) in self.grad_slot(grads, bias).iter_mut().zip(gb) {
                    *g += u;
                }
            }
            Op::BilinearSample { map, xy, meta } => {
                let (map, xy, meta) = (*map, *xy, meta.clone());
                let mv = self.nodes[map.0].value.clone();
                let (gmap, gxy) = bilinear_backward(&mv, &meta, up);
                for (g, u) in self.grad_slot(grads, map).iter_mut().zip(gmap) {
                    *g += u;
                }
                for (g, u) in self.grad_slot(grads, xy).iter_mut().zip(gxy) {
                    *g += u;
                }
            }
        }
    }
}
