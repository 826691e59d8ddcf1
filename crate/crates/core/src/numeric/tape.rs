//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. Nodes only ever
//! reference earlier nodes, so walking the tape from the end is a valid
//! reverse topological order.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};

use super::tensor::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Shared index list, cheap to clone into several ops of the same forward pass.
pub type Index = Rc<[usize]>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    GatherRows(usize, Index),
    ScatterSum(usize, Index),
    SegmentSoftmax(usize, Index),
    ScaleRows(usize, usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(TensorError::Dimension {
                op: "backward",
                lhs: nodes[loss.id].value.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::filled(nodes[loss.id].value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let mut acc = |input: usize, g: Tensor| {
                if !nodes[input].needs_grad {
                    return;
                }
                match &mut grads[input] {
                    Some(existing) => {
                        for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                            *e += v;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if nodes[*a].needs_grad {
                        acc(*a, matmul(&grad, val(*b), false, true)?);
                    }
                    if nodes[*b].needs_grad {
                        acc(*b, matmul(val(*a), &grad, true, false)?);
                    }
                }
                Op::AddBias(x, b) => {
                    let (n, m) = grad.dims2();
                    let mut db = vec![0.0; m];
                    for i in 0..n {
                        for (d, g) in db.iter_mut().zip(grad.row(i)) {
                            *d += g;
                        }
                    }
                    acc(*b, Tensor::new(val(*b).shape().to_vec(), db)?);
                    acc(*x, grad);
                }
                Op::Add(a, b) => {
                    acc(*b, grad.clone());
                    acc(*a, grad);
                }
                Op::Sub(a, b) => {
                    acc(*b, grad.map(|g| -g));
                    acc(*a, grad);
                }
                Op::Mul(a, b) => {
                    acc(*a, zip_with(&grad, val(*b), |g, y| g * y));
                    acc(*b, zip_with(&grad, val(*a), |g, x| g * x));
                }
                Op::Scale(x, c) => acc(*x, grad.map(|g| g * c)),
                Op::Relu(x) => acc(
                    *x,
                    zip_with(&grad, val(*x), |g, v| if v > 0.0 { g } else { 0.0 }),
                ),
                Op::LeakyRelu(x, alpha) => acc(
                    *x,
                    zip_with(&grad, val(*x), |g, v| if v > 0.0 { g } else { alpha * g }),
                ),
                Op::Sigmoid(x) => acc(*x, zip_with(&grad, &node.value, |g, y| g * y * (1.0 - y))),
                Op::Tanh(x) => acc(*x, zip_with(&grad, &node.value, |g, y| g * (1.0 - y * y))),
                Op::GatherRows(x, index) => {
                    let n = val(*x).rows();
                    acc(
                        *x,
                        scatter_rows(&grad, index, n)?.reshape(val(*x).shape().to_vec())?,
                    );
                }
                Op::ScatterSum(x, index) => {
                    acc(
                        *x,
                        gather_rows(&grad, index)?.reshape(val(*x).shape().to_vec())?,
                    );
                }
                Op::SegmentSoftmax(x, index) => {
                    let y = &node.value;
                    let (m, h) = y.dims2();
                    let n = index.iter().copied().max().map_or(0, |v| v + 1);
                    let mut dot = vec![0.0; n * h];
                    for k in 0..m {
                        for c in 0..h {
                            dot[index[k] * h + c] += y.get(k, c) * grad.get(k, c);
                        }
                    }
                    let mut dx = vec![0.0; m * h];
                    for k in 0..m {
                        for c in 0..h {
                            dx[k * h + c] = y.get(k, c) * (grad.get(k, c) - dot[index[k] * h + c]);
                        }
                    }
                    acc(*x, Tensor::new(y.shape().to_vec(), dx)?);
                }
                Op::ScaleRows(x, w) => {
                    let xv = val(*x);
                    let wv = val(*w);
                    let (m, d) = xv.dims2();
                    if nodes[*w].needs_grad {
                        let dw = (0..m)
                            .map(|i| grad.row(i).iter().zip(xv.row(i)).map(|(g, v)| g * v).sum())
                            .collect();
                        acc(*w, Tensor::new(wv.shape().to_vec(), dw)?);
                    }
                    let mut dx = grad.into_data();
                    for i in 0..m {
                        let s = wv.data()[i];
                        dx[i * d..(i + 1) * d].iter_mut().for_each(|g| *g *= s);
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                Op::SliceCols(x, start) => {
                    let (m, d) = val(*x).dims2();
                    let w = grad.cols();
                    let mut dx = vec![0.0; m * d];
                    for i in 0..m {
                        dx[i * d + start..i * d + start + w].copy_from_slice(grad.row(i));
                    }
                    acc(*x, Tensor::new(val(*x).shape().to_vec(), dx)?);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (m, w) = val(p).dims2();
                        let mut dp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            dp.extend_from_slice(&grad.row(i)[offset..offset + w]);
                        }
                        offset += w;
                        acc(p, Tensor::new(val(p).shape().to_vec(), dp)?);
                    }
                }
                Op::Sum(x) => {
                    let g = grad.item();
                    acc(*x, Tensor::filled(val(*x).shape(), g));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `var` does not influence the loss.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.value().rows()
    }

    pub fn cols(&self) -> usize {
        self.value().cols()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let needs = self.tape.needs(&[self.id]);
        self.tape.push(value, op, needs)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let needs = self.tape.needs(&[self.id, other.id]);
        self.tape.push(value, op, needs)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = matmul(&self.value(), &other.value(), false, false)?;
        Ok(self.binary(other, out, Op::MatMul(self.id, other.id)))
    }

    /// Adds `bias` (length = column count) to every row.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            let b = bias.value();
            let (n, m) = x.dims2();
            if b.len() != m {
                return Err(TensorError::Dimension {
                    op: "add_bias",
                    lhs: x.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let mut data = x.data().to_vec();
            for i in 0..n {
                for (v, bb) in data[i * m..(i + 1) * m].iter_mut().zip(b.data()) {
                    *v += bb;
                }
            }
            Tensor::new(x.shape().to_vec(), data)?
        };
        Ok(self.binary(bias, out, Op::AddBias(self.id, bias.id)))
    }

    /// `x W + b`.
    pub fn linear(self, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        self.matmul(weight)?.add_bias(bias)
    }

    fn elementwise(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(TensorError::Dimension {
                op: name,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        Ok(zip_with(&a, &b, f))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.elementwise(other, "add", |a, b| a + b)?;
        Ok(self.binary(other, out, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.elementwise(other, "sub", |a, b| a - b)?;
        Ok(self.binary(other, out, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.elementwise(other, "mul", |a, b| a * b)?;
        Ok(self.binary(other, out, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let out = self.value().map(|v| v * c);
        self.unary(out, Op::Scale(self.id, c))
    }

    pub fn relu(self) -> Var<'t> {
        let out = self.value().map(|v| v.max(0.0));
        self.unary(out, Op::Relu(self.id))
    }

    pub fn leaky_relu(self, alpha: f64) -> Var<'t> {
        let out = self.value().map(|v| if v > 0.0 { v } else { alpha * v });
        self.unary(out, Op::LeakyRelu(self.id, alpha))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let out = self.value().map(sigmoid);
        self.unary(out, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        let out = self.value().map(f64::tanh);
        self.unary(out, Op::Tanh(self.id))
    }

    /// Row `k` of the output is row `index[k]` of `self`.
    pub fn gather_rows(self, index: &Index) -> Result<Var<'t>> {
        let out = gather_rows(&self.value(), index)?;
        Ok(self.unary(out, Op::GatherRows(self.id, index.clone())))
    }

    /// Row `i` of the output is the sum of the rows `k` with `index[k] == i`.
    pub fn scatter_sum(self, index: &Index, n_segments: usize) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            if x.rows() != index.len() {
                return Err(TensorError::Dimension {
                    op: "scatter_sum",
                    lhs: x.shape().to_vec(),
                    rhs: vec![index.len()],
                });
            }
            scatter_rows(&x, index, n_segments)?
        };
        Ok(self.unary(out, Op::ScatterSum(self.id, index.clone())))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(self, index: &Index, n_segments: usize) -> Result<Var<'t>> {
        let out = segment_softmax(&self.value(), index, n_segments)?;
        Ok(self.unary(out, Op::SegmentSoftmax(self.id, index.clone())))
    }

    /// Multiplies row `i` by `weights[i]`.
    pub fn scale_rows(self, weights: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            let w = weights.value();
            let (m, d) = x.dims2();
            if w.len() != m {
                return Err(TensorError::Dimension {
                    op: "scale_rows",
                    lhs: x.shape().to_vec(),
                    rhs: w.shape().to_vec(),
                });
            }
            let mut data = x.data().to_vec();
            for i in 0..m {
                let s = w.data()[i];
                data[i * d..(i + 1) * d].iter_mut().for_each(|v| *v *= s);
            }
            Tensor::new(x.shape().to_vec(), data)?
        };
        Ok(self.binary(weights, out, Op::ScaleRows(self.id, weights.id)))
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'t>> {
        let out = {
            let x = self.value();
            let (m, d) = x.dims2();
            if start + width > d {
                return Err(TensorError::Dimension {
                    op: "slice_cols",
                    lhs: x.shape().to_vec(),
                    rhs: vec![start + width],
                });
            }
            let mut data = Vec::with_capacity(m * width);
            for i in 0..m {
                data.extend_from_slice(&x.row(i)[start..start + width]);
            }
            Tensor::new(vec![m, width], data)?
        };
        Ok(self.unary(out, Op::SliceCols(self.id, start)))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::Evaluation(
            "concat_cols needs at least one input".into(),
        ))?;
        let tape = first.tape;
        let out = {
            let values: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
            let m = values[0].rows();
            for v in &values {
                if v.rows() != m {
                    return Err(TensorError::Dimension {
                        op: "concat_cols",
                        lhs: values[0].shape().to_vec(),
                        rhs: v.shape().to_vec(),
                    });
                }
            }
            let width: usize = values.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(m * width);
            for i in 0..m {
                for v in &values {
                    data.extend_from_slice(v.row(i));
                }
            }
            Tensor::new(vec![m, width], data)?
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let needs = tape.needs(&ids);
        Ok(tape.push(out, Op::ConcatCols(ids), needs))
    }

    pub fn sum(self) -> Var<'t> {
        let out = Tensor::scalar(self.value().data().iter().sum());
        self.unary(out, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked by caller")
}

fn view(t: &Tensor, transpose: bool) -> ArrayView2<'_, f64> {
    let v = ArrayView2::from_shape(t.dims2(), t.data()).expect("dims2 matches data");
    if transpose {
        v.reversed_axes()
    } else {
        v
    }
}

/// `op(a) op(b)` where `op` optionally transposes.
fn matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    let av = view(a, ta);
    let bv = view(b, tb);
    let (m, k) = av.dim();
    let (k2, n) = bv.dim();
    if k != k2 {
        return Err(TensorError::Dimension {
            op: "matmul",
            lhs: vec![m, k],
            rhs: vec![k2, n],
        });
    }
    let mut c = Array2::<f64>::zeros((m, n));
    if k > 0 && m > 0 && n > 0 {
        general_mat_mul(1.0, &av, &bv, 0.0, &mut c);
    }
    Tensor::new(vec![m, n], c.into_raw_vec_and_offset().0)
}

fn gather_rows(x: &Tensor, index: &[usize]) -> Result<Tensor> {
    let (n, d) = x.dims2();
    let mut data = Vec::with_capacity(index.len() * d);
    for &i in index {
        if i >= n {
            return Err(TensorError::Bounds {
                op: "gather_rows",
                index: i,
                len: n,
            });
        }
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![index.len(), d], data)
}

fn scatter_rows(x: &Tensor, index: &[usize], n: usize) -> Result<Tensor> {
    let d = x.cols();
    let mut data = vec![0.0; n * d];
    for (k, &i) in index.iter().enumerate() {
        if i >= n {
            return Err(TensorError::Bounds {
                op: "scatter_sum",
                index: i,
                len: n,
            });
        }
        for (o, v) in data[i * d..(i + 1) * d].iter_mut().zip(x.row(k)) {
            *o += v;
        }
    }
    Tensor::new(vec![n, d], data)
}

fn segment_softmax(x: &Tensor, index: &[usize], n: usize) -> Result<Tensor> {
    let (m, h) = x.dims2();
    if m != index.len() {
        return Err(TensorError::Dimension {
            op: "segment_softmax",
            lhs: x.shape().to_vec(),
            rhs: vec![index.len()],
        });
    }
    let mut max = vec![f64::NEG_INFINITY; n * h];
    for (k, &i) in index.iter().enumerate() {
        if i >= n {
            return Err(TensorError::Bounds {
                op: "segment_softmax",
                index: i,
                len: n,
            });
        }
        for c in 0..h {
            let slot = &mut max[i * h + c];
            *slot = slot.max(x.get(k, c));
        }
    }
    let mut out = vec![0.0; m * h];
    let mut denom = vec![0.0; n * h];
    for (k, &i) in index.iter().enumerate() {
        for c in 0..h {
            let e = (x.get(k, c) - max[i * h + c]).exp();
            out[k * h + c] = e;
            denom[i * h + c] += e;
        }
    }
    for (k, &i) in index.iter().enumerate() {
        for c in 0..h {
            out[k * h + c] /= denom[i * h + c];
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}
