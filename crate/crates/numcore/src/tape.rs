//! Reverse-mode gradient tape over dense tensors.
//!
//! Ops validate shapes eagerly, compute their output immediately, and
//! record a node referring to the input handles. `backward` walks the
//! node list in reverse; a tape can be consumed by backward exactly
//! once. Gradients accumulate into tensors until something (normally
//! the optimizer) zeroes them, so several tapes in a row behave like
//! gradient accumulation.

use std::cell::{Cell, RefCell};

use crate::error::NumError;
use crate::kernels;
use crate::scalar::{count, lit, Scalar};
use crate::tensor::Tensor;

/// Probabilities are clamped at this floor before entering a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// How far a probability vector may drift from summing to one before
/// cross-entropy rejects it.
pub const PROB_SUM_TOL: f64 = 1e-6;

enum Rule<T: Scalar> {
    Add,
    Sub,
    Mul,
    MulConst(T),
    MatMul { m: usize, k: usize, n: usize },
    MatVec { m: usize, n: usize },
    Dot,
    ColsSum { cols: Vec<usize> },
    Tanh,
    Sigmoid,
    Relu,
    Elu,
    Softmax,
    Concat,
    Slice { start: usize, len: usize },
    Reshape,
    Mean,
    Sum,
    CrossEntropy,
}

struct Node<T: Scalar> {
    rule: Rule<T>,
    inputs: Vec<Tensor<T>>,
    output: Tensor<T>,
}

pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), consumed: Cell::new(false) }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn push(
        &self,
        op: &'static str,
        rule: Rule<T>,
        inputs: Vec<Tensor<T>>,
        shape: Vec<usize>,
        data: Vec<T>,
    ) -> Result<Tensor<T>, NumError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op });
        }
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let out = Tensor::from_op(shape, data, requires_grad);
        self.nodes.borrow_mut().push(Node { rule, inputs, output: out.clone() });
        Ok(out)
    }

    fn check_same_shape(
        op: &'static str,
        a: &Tensor<T>,
        b: &Tensor<T>,
    ) -> Result<(), NumError> {
        if a.dims() != b.dims() {
            return Err(NumError::ShapeMismatch {
                op,
                detail: format!("{:?} vs {:?}", a.dims(), b.dims()),
            });
        }
        Ok(())
    }

    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        Self::check_same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
        self.push("add", Rule::Add, vec![a.clone(), b.clone()], a.shape(), data)
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        Self::check_same_shape("sub", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
        self.push("sub", Rule::Sub, vec![a.clone(), b.clone()], a.shape(), data)
    }

    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        Self::check_same_shape("mul", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
        self.push("mul", Rule::Mul, vec![a.clone(), b.clone()], a.shape(), data)
    }

    pub fn mul_const(&self, a: &Tensor<T>, c: T) -> Result<Tensor<T>, NumError> {
        if !c.is_finite() {
            return Err(NumError::NonFinite { op: "mul_const" });
        }
        let data = a.data().iter().map(|&x| x * c).collect();
        self.push("mul_const", Rule::MulConst(c), vec![a.clone()], a.shape(), data)
    }

    /// [m,k] x [k,n] -> [m,n]
    pub fn matmul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let (ad, bd) = (a.shape(), b.shape());
        if ad.len() != 2 || bd.len() != 2 || ad[1] != bd[0] {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", ad, bd),
            });
        }
        let (m, k, n) = (ad[0], ad[1], bd[1]);
        let mut data = vec![T::zero(); m * n];
        kernels::matmul(&a.data(), &b.data(), m, k, n, &mut data);
        self.push("matmul", Rule::MatMul { m, k, n }, vec![a.clone(), b.clone()], vec![m, n], data)
    }

    /// [m,n] x [n] -> [m]
    pub fn matvec(&self, w: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let (wd, xd) = (w.shape(), x.shape());
        if wd.len() != 2 || xd.len() != 1 || wd[1] != xd[0] {
            return Err(NumError::ShapeMismatch {
                op: "matvec",
                detail: format!("{:?} x {:?}", wd, xd),
            });
        }
        let (m, n) = (wd[0], wd[1]);
        let mut data = vec![T::zero(); m];
        kernels::matvec(&w.data(), &x.data(), m, n, &mut data);
        self.push("matvec", Rule::MatVec { m, n }, vec![w.clone(), x.clone()], vec![m], data)
    }

    /// Inner product of two equal-length vectors, yielding a scalar.
    pub fn dot(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let (ad, bd) = (a.shape(), b.shape());
        if ad.len() != 1 || bd.len() != 1 || ad[0] != bd[0] {
            return Err(NumError::ShapeMismatch {
                op: "dot",
                detail: format!("{:?} . {:?}", ad, bd),
            });
        }
        let mut acc = T::zero();
        for (&x, &y) in a.data().iter().zip(b.data().iter()) {
            acc = acc + x * y;
        }
        self.push("dot", Rule::Dot, vec![a.clone(), b.clone()], vec![1], vec![acc])
    }

    /// Sum of the selected columns of a [m,n] matrix: the product of the
    /// matrix with a multi-hot vector, without materializing the vector.
    /// Duplicate column indices contribute once per occurrence.
    pub fn cols_sum(&self, w: &Tensor<T>, cols: &[usize]) -> Result<Tensor<T>, NumError> {
        let wd = w.shape();
        if wd.len() != 2 {
            return Err(NumError::ShapeMismatch {
                op: "cols_sum",
                detail: format!("expected matrix, got {:?}", wd),
            });
        }
        let (m, n) = (wd[0], wd[1]);
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(NumError::Contract {
                op: "cols_sum",
                detail: format!("column {} out of range for {} columns", bad, n),
            });
        }
        let wv = w.data();
        let mut data = vec![T::zero(); m];
        for &c in cols {
            for i in 0..m {
                data[i] = data[i] + wv[i * n + c];
            }
        }
        drop(wv);
        self.push("cols_sum", Rule::ColsSum { cols: cols.to_vec() }, vec![w.clone()], vec![m], data)
    }

    pub fn tanh(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let data = a.data().iter().map(|x| x.tanh()).collect();
        self.push("tanh", Rule::Tanh, vec![a.clone()], a.shape(), data)
    }

    pub fn sigmoid(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let one = T::one();
        let data = a
            .data()
            .iter()
            .map(|&x| {
                // split on sign for stability at large magnitudes
                if x >= T::zero() {
                    one / (one + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (one + e)
                }
            })
            .collect();
        self.push("sigmoid", Rule::Sigmoid, vec![a.clone()], a.shape(), data)
    }

    /// max(x, 0); the subgradient at zero is taken as zero.
    pub fn relu(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let data = a.data().iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        self.push("relu", Rule::Relu, vec![a.clone()], a.shape(), data)
    }

    /// x for x > 0, exp(x)-1 otherwise. Continuously differentiable,
    /// which keeps finite-difference checks tight near the origin.
    pub fn elu(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        let data = a
            .data()
            .iter()
            .map(|&x| if x > T::zero() { x } else { x.exp() - T::one() })
            .collect();
        self.push("elu", Rule::Elu, vec![a.clone()], a.shape(), data)
    }

    /// Softmax over a vector, computed with max subtraction.
    pub fn softmax(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        if a.dims().len() != 1 {
            return Err(NumError::ShapeMismatch {
                op: "softmax",
                detail: format!("expected vector, got {:?}", a.dims()),
            });
        }
        if a.numel() == 0 {
            return Err(NumError::EmptyInput { op: "softmax" });
        }
        let av = a.values();
        let max = av.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut data: Vec<T> = av.iter().map(|&x| (x - max).exp()).collect();
        let total = data.iter().fold(T::zero(), |s, &v| s + v);
        for v in data.iter_mut() {
            *v = *v / total;
        }
        self.push("softmax", Rule::Softmax, vec![a.clone()], a.shape(), data)
    }

    /// Concatenation of vectors, in argument order.
    pub fn concat(&self, parts: &[Tensor<T>]) -> Result<Tensor<T>, NumError> {
        if parts.is_empty() {
            return Err(NumError::EmptyInput { op: "concat" });
        }
        if let Some(bad) = parts.iter().find(|p| p.dims().len() != 1) {
            return Err(NumError::ShapeMismatch {
                op: "concat",
                detail: format!("expected vectors, got {:?}", bad.dims()),
            });
        }
        let total: usize = parts.iter().map(|p| p.numel()).sum();
        let mut data = Vec::with_capacity(total);
        for p in parts {
            data.extend_from_slice(&p.data());
        }
        self.push("concat", Rule::Concat, parts.to_vec(), vec![total], data)
    }

    /// Contiguous range of a vector.
    pub fn slice(&self, a: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>, NumError> {
        if a.dims().len() != 1 {
            return Err(NumError::ShapeMismatch {
                op: "slice",
                detail: format!("expected vector, got {:?}", a.dims()),
            });
        }
        if start + len > a.numel() {
            return Err(NumError::Contract {
                op: "slice",
                detail: format!("range {}..{} outside length {}", start, start + len, a.numel()),
            });
        }
        let data = a.data()[start..start + len].to_vec();
        self.push("slice", Rule::Slice { start, len }, vec![a.clone()], vec![len], data)
    }

    pub fn reshape(&self, a: &Tensor<T>, shape: Vec<usize>) -> Result<Tensor<T>, NumError> {
        let numel: usize = shape.iter().product();
        if numel != a.numel() {
            return Err(NumError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", a.dims(), shape),
            });
        }
        let data = a.values();
        self.push("reshape", Rule::Reshape, vec![a.clone()], shape, data)
    }

    /// Mean of all elements, yielding a scalar.
    pub fn mean(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        if a.numel() == 0 {
            return Err(NumError::EmptyInput { op: "mean" });
        }
        let total = a.data().iter().fold(T::zero(), |s, &v| s + v);
        let data = vec![total / count::<T>(a.numel())];
        self.push("mean", Rule::Mean, vec![a.clone()], vec![1], data)
    }

    /// Sum of all elements, yielding a scalar.
    pub fn sum(&self, a: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        if a.numel() == 0 {
            return Err(NumError::EmptyInput { op: "sum" });
        }
        let total = a.data().iter().fold(T::zero(), |s, &v| s + v);
        self.push("sum", Rule::Sum, vec![a.clone()], vec![1], vec![total])
    }

    /// Cross-entropy between a probability vector and a one-hot target:
    /// -sum_i t_i ln(max(p_i, floor)). The target carries no gradient.
    pub fn cross_entropy(
        &self,
        predicted: &Tensor<T>,
        target: &Tensor<T>,
    ) -> Result<Tensor<T>, NumError> {
        if predicted.dims().len() != 1 || predicted.dims() != target.dims() {
            return Err(NumError::ShapeMismatch {
                op: "cross_entropy",
                detail: format!("{:?} vs {:?}", predicted.dims(), target.dims()),
            });
        }
        if predicted.numel() == 0 {
            return Err(NumError::EmptyInput { op: "cross_entropy" });
        }
        let p = predicted.values();
        let t = target.values();
        let sum = p.iter().fold(T::zero(), |s, &v| s + v);
        if (sum - T::one()).abs() > lit::<T>(PROB_SUM_TOL) {
            return Err(NumError::Contract {
                op: "cross_entropy",
                detail: format!("predicted sums to {}, not 1", sum),
            });
        }
        if p.iter().any(|&v| v < -lit::<T>(PROB_SUM_TOL)) {
            return Err(NumError::Contract {
                op: "cross_entropy",
                detail: "predicted has negative entries".to_string(),
            });
        }
        let one = T::one();
        let ok_target = t.iter().all(|&v| v == T::zero() || v == one)
            && t.iter().fold(T::zero(), |s, &v| s + v) == one;
        if !ok_target {
            return Err(NumError::Contract {
                op: "cross_entropy",
                detail: "target is not one-hot".to_string(),
            });
        }
        let floor = lit::<T>(PROB_FLOOR);
        let mut loss = T::zero();
        for (&pi, &ti) in p.iter().zip(&t) {
            if ti > T::zero() {
                loss = loss - pi.max(floor).ln();
            }
        }
        self.push(
            "cross_entropy",
            Rule::CrossEntropy,
            vec![predicted.clone(), target.clone()],
            vec![1],
            vec![loss],
        )
    }

    /// matvec followed by a same-shape add: W x + b.
    pub fn affine(
        &self,
        w: &Tensor<T>,
        x: &Tensor<T>,
        b: &Tensor<T>,
    ) -> Result<Tensor<T>, NumError> {
        let wx = self.matvec(w, x)?;
        self.add(&wx, b)
    }

    /// Runs reverse-mode accumulation from a scalar loss. Touches each
    /// node once, newest to oldest; parameters not reached by the loss
    /// keep a zero (or absent) gradient. A tape runs backward once.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<(), NumError> {
        if self.consumed.get() {
            return Err(NumError::DoubleBackward);
        }
        self.consumed.set(true);
        if loss.numel() != 1 {
            return Err(NumError::NotScalar { shape: loss.shape() });
        }
        loss.accumulate_grad(&[T::one()]);
        let nodes = self.nodes.borrow();
        for node in nodes.iter().rev() {
            let gout = match node.output.grad_clone() {
                Some(g) => g,
                None => continue,
            };
            step_backward(node, &gout);
        }
        for node in nodes.iter() {
            if !node.output.grad_finite() || node.inputs.iter().any(|t| !t.grad_finite()) {
                return Err(NumError::NonFinite { op: "backward" });
            }
        }
        Ok(())
    }
}

fn step_backward<T: Scalar>(node: &Node<T>, gout: &[T]) {
    let inp = &node.inputs;
    match &node.rule {
        Rule::Add => {
            if inp[0].requires_grad() {
                inp[0].accumulate_grad(gout);
            }
            if inp[1].requires_grad() {
                inp[1].accumulate_grad(gout);
            }
        }
        Rule::Sub => {
            if inp[0].requires_grad() {
                inp[0].accumulate_grad(gout);
            }
            if inp[1].requires_grad() {
                let neg: Vec<T> = gout.iter().map(|&g| -g).collect();
                inp[1].accumulate_grad(&neg);
            }
        }
        Rule::Mul => {
            if inp[0].requires_grad() {
                let contrib: Vec<T> =
                    gout.iter().zip(inp[1].data().iter()).map(|(&g, &b)| g * b).collect();
                inp[0].accumulate_grad(&contrib);
            }
            if inp[1].requires_grad() {
                let contrib: Vec<T> =
                    gout.iter().zip(inp[0].data().iter()).map(|(&g, &a)| g * a).collect();
                inp[1].accumulate_grad(&contrib);
            }
        }
        Rule::MulConst(c) => {
            if inp[0].requires_grad() {
                let contrib: Vec<T> = gout.iter().map(|&g| g * *c).collect();
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::MatMul { m, k, n } => {
            if inp[0].requires_grad() {
                let mut da = vec![T::zero(); m * k];
                kernels::matmul_nt(gout, &inp[1].data(), *m, *n, *k, &mut da);
                inp[0].accumulate_grad(&da);
            }
            if inp[1].requires_grad() {
                let mut db = vec![T::zero(); k * n];
                kernels::matmul_tn(&inp[0].data(), gout, *m, *k, *n, &mut db);
                inp[1].accumulate_grad(&db);
            }
        }
        Rule::MatVec { m, n } => {
            if inp[0].requires_grad() {
                let mut dw = vec![T::zero(); m * n];
                kernels::outer_acc(gout, &inp[1].data(), *m, *n, &mut dw);
                inp[0].accumulate_grad(&dw);
            }
            if inp[1].requires_grad() {
                let mut dx = vec![T::zero(); *n];
                kernels::matvec_t_acc(&inp[0].data(), gout, *m, *n, &mut dx);
                inp[1].accumulate_grad(&dx);
            }
        }
        Rule::Dot => {
            let g = gout[0];
            if inp[0].requires_grad() {
                let contrib: Vec<T> = inp[1].data().iter().map(|&b| g * b).collect();
                inp[0].accumulate_grad(&contrib);
            }
            if inp[1].requires_grad() {
                let contrib: Vec<T> = inp[0].data().iter().map(|&a| g * a).collect();
                inp[1].accumulate_grad(&contrib);
            }
        }
        Rule::ColsSum { cols } => {
            if inp[0].requires_grad() {
                let d = inp[0].dims().to_vec();
                let (m, n) = (d[0], d[1]);
                let mut dw = vec![T::zero(); m * n];
                for &c in cols {
                    for (i, &g) in gout.iter().enumerate() {
                        dw[i * n + c] = dw[i * n + c] + g;
                    }
                }
                inp[0].accumulate_grad(&dw);
            }
        }
        Rule::Tanh => {
            if inp[0].requires_grad() {
                let contrib: Vec<T> = gout
                    .iter()
                    .zip(node.output.data().iter())
                    .map(|(&g, &y)| g * (T::one() - y * y))
                    .collect();
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::Sigmoid => {
            if inp[0].requires_grad() {
                let contrib: Vec<T> = gout
                    .iter()
                    .zip(node.output.data().iter())
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect();
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::Relu => {
            if inp[0].requires_grad() {
                let contrib: Vec<T> = gout
                    .iter()
                    .zip(node.output.data().iter())
                    .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
                    .collect();
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::Elu => {
            if inp[0].requires_grad() {
                // y > 0 iff x > 0; below zero the derivative is y + 1
                let contrib: Vec<T> = gout
                    .iter()
                    .zip(node.output.data().iter())
                    .map(|(&g, &y)| if y > T::zero() { g } else { g * (y + T::one()) })
                    .collect();
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::Softmax => {
            if inp[0].requires_grad() {
                let y = node.output.data();
                let mut inner = T::zero();
                for (&g, &yi) in gout.iter().zip(y.iter()) {
                    inner = inner + g * yi;
                }
                let contrib: Vec<T> =
                    gout.iter().zip(y.iter()).map(|(&g, &yi)| yi * (g - inner)).collect();
                drop(y);
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::Concat => {
            let mut offset = 0;
            for part in inp {
                let len = part.numel();
                if part.requires_grad() {
                    part.accumulate_grad(&gout[offset..offset + len]);
                }
                offset += len;
            }
        }
        Rule::Slice { start, len } => {
            if inp[0].requires_grad() {
                let mut dx = vec![T::zero(); inp[0].numel()];
                dx[*start..*start + *len].copy_from_slice(gout);
                inp[0].accumulate_grad(&dx);
            }
        }
        Rule::Reshape => {
            if inp[0].requires_grad() {
                inp[0].accumulate_grad(gout);
            }
        }
        Rule::Mean => {
            if inp[0].requires_grad() {
                let scale = gout[0] / count::<T>(inp[0].numel());
                let contrib = vec![scale; inp[0].numel()];
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::Sum => {
            if inp[0].requires_grad() {
                let contrib = vec![gout[0]; inp[0].numel()];
                inp[0].accumulate_grad(&contrib);
            }
        }
        Rule::CrossEntropy => {
            if inp[0].requires_grad() {
                let g = gout[0];
                let floor = lit::<T>(PROB_FLOOR);
                let p = inp[0].data();
                let t = inp[1].data();
                let contrib: Vec<T> = p
                    .iter()
                    .zip(t.iter())
                    .map(|(&pi, &ti)| {
                        // clamped entries sit on a constant branch
                        if ti > T::zero() && pi >= floor {
                            -g / pi
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                drop(p);
                drop(t);
                inp[0].accumulate_grad(&contrib);
            }
        }
    }
}
