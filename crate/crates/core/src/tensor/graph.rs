use std::cell::{Ref, RefCell};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{self, split_axis};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How entries above the main diagonal of a score matrix are suppressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Replace with −∞ so softmax assigns them zero weight.
    #[default]
    NegInf,
    /// Replace with literal 0.0 (still receives softmax weight e⁰).
    ZeroLiteral,
}

/// Probabilities below this are clamped inside the cross-entropy log.
pub const CE_CLAMP: f64 = 1e-12;
const DISTRIBUTION_TOL: f64 = 1e-6;

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Softmax(Var),
    Mask(Var),
    Conv { x: Var, w: Var, b: Var, dilation: usize },
    Dropout { x: Var, mask: Vec<T> },
    Mean { x: Var, axis: usize },
    Sum(Var),
    Select { x: Var, axis: usize, index: usize },
    Stack(Vec<Var>),
    CrossEntropy { p: Var, label: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recording of a differentiable computation.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// Register an input or parameter.
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a))
    }

    /// `[m,k] · [k,n]`
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (va, vb) = (self.value(a), self.value(b));
            if va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0) {
                return Err(Error::shape(
                    "matmul",
                    format!("{:?} · {:?}", va.shape(), vb.shape()),
                ));
            }
            let (m, k, n) = (va.dim(0), va.dim(1), vb.dim(1));
            Tensor::new([m, n], kernels::matmul(va.data(), vb.data(), m, k, n))?
        };
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = {
            let va = self.value(a);
            if va.ndim() != 2 {
                return Err(Error::shape("transpose", format!("{:?} is not 2-D", va.shape())));
            }
            let (r, c) = (va.dim(0), va.dim(1));
            Tensor::new([c, r], kernels::transpose(va.data(), r, c))?
        };
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Affine map over the trailing axis: `x[…, F_in] · Wᵀ + b`, with
    /// `W: [F_out, F_in]` and `b: [F_out]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = {
            let (vx, vw) = (self.value(x), self.value(w));
            let vb = b.map(|b| self.value(b));
            if vx.ndim() == 0 || vw.ndim() != 2 || vx.shape()[vx.ndim() - 1] != vw.dim(1) {
                return Err(Error::shape(
                    "linear",
                    format!("x {:?} with W {:?}", vx.shape(), vw.shape()),
                ));
            }
            let (fout, fin) = (vw.dim(0), vw.dim(1));
            if let Some(vb) = &vb {
                if vb.shape() != [fout] {
                    return Err(Error::shape(
                        "linear",
                        format!("bias {:?} for {fout} outputs", vb.shape()),
                    ));
                }
            }
            let rows = vx.len() / fin;
            let data = kernels::linear(vx.data(), vw.data(), vb.as_ref().map(|b| b.data()), rows, fin, fout);
            let mut shape = vx.shape().to_vec();
            *shape.last_mut().unwrap() = fout;
            Tensor::new(shape, data)?
        };
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    /// Softmax over the trailing axis; −∞ entries get probability 0.
    pub fn softmax_rows(&self, x: Var) -> Result<Var> {
        let out = {
            let vx = self.value(x);
            let cols = *vx.shape().last().ok_or_else(|| Error::shape("softmax_rows", "scalar input"))?;
            let data = kernels::softmax_rows(vx.data(), cols).map_err(|row| {
                Error::InvalidArgument(format!("softmax row {row} is entirely -inf"))
            })?;
            Tensor::new(vx.shape().to_vec(), data)?
        };
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// Suppress entries with column > row of a square matrix.
    pub fn lower_triangular_mask(&self, s: Var, mode: MaskMode) -> Result<Var> {
        let out = {
            let vs = self.value(s);
            if vs.ndim() != 2 || vs.dim(0) != vs.dim(1) {
                return Err(Error::shape("lower_triangular_mask", format!("{:?} is not square", vs.shape())));
            }
            let n = vs.dim(0);
            let fill = match mode {
                MaskMode::NegInf => T::neg_infinity(),
                MaskMode::ZeroLiteral => T::zero(),
            };
            let mut out = vs.clone();
            let d = out.data_mut();
            for r in 0..n {
                d[r * n + r + 1..(r + 1) * n].iter_mut().for_each(|v| *v = fill);
            }
            out
        };
        Ok(self.push(out, Op::Mask(s)))
    }

    /// Causal dilated 1-D convolution: `x: [C_in, T]`, `w: [C_out, C_in, k]`,
    /// `b: [C_out]` → `[C_out, T]`.
    pub fn causal_conv1d(&self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let out = {
            let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
            if dilation == 0 {
                return Err(Error::InvalidArgument("dilation must be at least 1".into()));
            }
            if vx.ndim() != 2 || vw.ndim() != 3 || vw.dim(1) != vx.dim(0) || vw.dim(2) == 0 {
                return Err(Error::shape(
                    "causal_conv1d",
                    format!("x {:?} with w {:?}", vx.shape(), vw.shape()),
                ));
            }
            let (c_out, c_in, k) = (vw.dim(0), vw.dim(1), vw.dim(2));
            if vb.shape() != [c_out] {
                return Err(Error::shape("causal_conv1d", format!("bias {:?} for {c_out} outputs", vb.shape())));
            }
            let t = vx.dim(1);
            let data = kernels::causal_conv1d(vx.data(), vw.data(), vb.data(), c_in, c_out, t, k, dilation);
            Tensor::new([c_out, t], data)?
        };
        Ok(self.push(out, Op::Conv { x, w, b, dilation }))
    }

    /// Inverted dropout. Identity outside training or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::of(1.0 / (1.0 - p));
        let (out, mask) = {
            let vx = self.value(x);
            let mask: Vec<T> = (0..vx.len())
                .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep_scale })
                .collect();
            let data = vx.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
            (Tensor::new(vx.shape().to_vec(), data)?, mask)
        };
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_over_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let out = {
            let vx = self.value(x);
            if axis >= vx.ndim() || vx.dim(axis) == 0 {
                return Err(Error::shape("mean_over_axis", format!("axis {axis} of {:?}", vx.shape())));
            }
            let (outer, n, inner) = split_axis(vx.shape(), axis);
            let inv = T::one() / T::of_usize(n);
            let mut data = vec![T::zero(); outer * inner];
            for o in 0..outer {
                for j in 0..n {
                    let src = &vx.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                    for (d, &s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            data.iter_mut().for_each(|d| *d *= inv);
            let mut shape = vx.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, data)?
        };
        Ok(self.push(out, Op::Mean { x, axis }))
    }

    pub fn sum(&self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// Take `index` along `axis`, removing that axis.
    pub fn select(&self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let out = {
            let vx = self.value(x);
            if axis >= vx.ndim() || index >= vx.dim(axis) {
                return Err(Error::shape("select", format!("index {index} on axis {axis} of {:?}", vx.shape())));
            }
            let (outer, n, inner) = split_axis(vx.shape(), axis);
            let mut data = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                let start = (o * n + index) * inner;
                data.extend_from_slice(&vx.data()[start..start + inner]);
            }
            let mut shape = vx.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, data)?
        };
        Ok(self.push(out, Op::Select { x, axis, index }))
    }

    /// Stack equally shaped nodes along a new leading axis.
    pub fn stack(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let values: Vec<Tensor<T>> = parts.iter().map(|&p| self.value(p).clone()).collect();
            Tensor::stack(&values)?
        };
        Ok(self.push(out, Op::Stack(parts.to_vec())))
    }

    /// `−ln p[label]` with `p[label]` clamped to at least 1e−12.
    pub fn cross_entropy(&self, p: Var, label: usize) -> Result<Var> {
        let out = {
            let vp = self.value(p);
            if vp.ndim() != 1 || label >= vp.len() {
                return Err(Error::shape("cross_entropy", format!("label {label} for {:?}", vp.shape())));
            }
            let total = vp.sum().as_f64();
            if (total - 1.0).abs() > DISTRIBUTION_TOL || vp.data().iter().any(|&v| v < T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "cross_entropy input is not a distribution (sum {total})"
                )));
            }
            let q = vp.data()[label].max(T::of(CE_CLAMP));
            Tensor::scalar(-q.ln())
        };
        Ok(self.push(out, Op::CrossEntropy { p, label }))
    }

    /// Reverse-mode accumulation from a one-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes[root.0].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got {:?}", nodes[root.0].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones(nodes[root.0].value.shape().to_vec()));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let g_data = g.data();
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    axpy(slot(&mut grads, &nodes, *a), g_data);
                    axpy(slot(&mut grads, &nodes, *b), g_data);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a).data(), val(*b).data());
                    for ((o, &gi), &bi) in slot(&mut grads, &nodes, *a).iter_mut().zip(g_data).zip(vb) {
                        *o += gi * bi;
                    }
                    for ((o, &gi), &ai) in slot(&mut grads, &nodes, *b).iter_mut().zip(g_data).zip(va) {
                        *o += gi * ai;
                    }
                }
                Op::Scale(a, c) => {
                    for (o, &gi) in slot(&mut grads, &nodes, *a).iter_mut().zip(g_data) {
                        *o += gi * *c;
                    }
                }
                Op::Relu(a) => {
                    let va = val(*a).data();
                    for ((o, &gi), &ai) in slot(&mut grads, &nodes, *a).iter_mut().zip(g_data).zip(va) {
                        if ai > T::zero() {
                            *o += gi;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let (m, k, n) = (va.dim(0), va.dim(1), vb.dim(1));
                    let mut ga = take_slot(&mut grads, &nodes, *a);
                    let mut gb = take_slot(&mut grads, &nodes, *b);
                    kernels::matmul_backward(g_data, va.data(), vb.data(), m, k, n, ga.data_mut(), gb.data_mut());
                    put(&mut grads, *a, ga);
                    put(&mut grads, *b, gb);
                }
                Op::Transpose(a) => {
                    let (r, c) = (val(*a).dim(0), val(*a).dim(1));
                    let gt = kernels::transpose(g_data, c, r);
                    axpy(slot(&mut grads, &nodes, *a), &gt);
                }
                Op::Linear { x, w, b } => {
                    let (vx, vw) = (val(*x), val(*w));
                    let (fout, fin) = (vw.dim(0), vw.dim(1));
                    let rows = vx.len() / fin;
                    let mut gx = take_slot(&mut grads, &nodes, *x);
                    let mut gw = take_slot(&mut grads, &nodes, *w);
                    let mut gb = b.map(|b| take_slot(&mut grads, &nodes, b));
                    kernels::linear_backward(
                        g_data,
                        vx.data(),
                        vw.data(),
                        rows,
                        fin,
                        fout,
                        gx.data_mut(),
                        gw.data_mut(),
                        gb.as_mut().map(|t| t.data_mut()),
                    );
                    put(&mut grads, *x, gx);
                    put(&mut grads, *w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        put(&mut grads, *b, gb);
                    }
                }
                Op::Softmax(a) => {
                    let cols = *node.value.shape().last().unwrap();
                    kernels::softmax_rows_backward(g_data, node.value.data(), cols, slot(&mut grads, &nodes, *a));
                }
                Op::Mask(a) => {
                    let n = node.value.dim(0);
                    let ga = slot(&mut grads, &nodes, *a);
                    for r in 0..n {
                        for c in 0..=r {
                            ga[r * n + c] += g_data[r * n + c];
                        }
                    }
                }
                Op::Conv { x, w, b, dilation } => {
                    let (vx, vw) = (val(*x), val(*w));
                    let (c_out, c_in, k) = (vw.dim(0), vw.dim(1), vw.dim(2));
                    let t = vx.dim(1);
                    let mut gx = take_slot(&mut grads, &nodes, *x);
                    let mut gw = take_slot(&mut grads, &nodes, *w);
                    let mut gb = take_slot(&mut grads, &nodes, *b);
                    kernels::causal_conv1d_backward(
                        g_data,
                        vx.data(),
                        vw.data(),
                        c_in,
                        c_out,
                        t,
                        k,
                        *dilation,
                        gx.data_mut(),
                        gw.data_mut(),
                        gb.data_mut(),
                    );
                    put(&mut grads, *x, gx);
                    put(&mut grads, *w, gw);
                    put(&mut grads, *b, gb);
                }
                Op::Dropout { x, mask } => {
                    for ((o, &gi), &mi) in slot(&mut grads, &nodes, *x).iter_mut().zip(g_data).zip(mask) {
                        *o += gi * mi;
                    }
                }
                Op::Mean { x, axis } => {
                    let (outer, n, inner) = split_axis(val(*x).shape(), *axis);
                    let inv = T::one() / T::of_usize(n);
                    let gx = slot(&mut grads, &nodes, *x);
                    for o in 0..outer {
                        let src = &g_data[o * inner..(o + 1) * inner];
                        for j in 0..n {
                            let dst = &mut gx[(o * n + j) * inner..(o * n + j + 1) * inner];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s * inv;
                            }
                        }
                    }
                }
                Op::Sum(x) => {
                    let gv = g_data[0];
                    slot(&mut grads, &nodes, *x).iter_mut().for_each(|o| *o += gv);
                }
                Op::Select { x, axis, index } => {
                    let (outer, n, inner) = split_axis(val(*x).shape(), *axis);
                    let gx = slot(&mut grads, &nodes, *x);
                    for o in 0..outer {
                        let start = (o * n + index) * inner;
                        for (d, &s) in gx[start..start + inner].iter_mut().zip(&g_data[o * inner..(o + 1) * inner]) {
                            *d += s;
                        }
                    }
                }
                Op::Stack(parts) => {
                    let inner = node.value.len() / parts.len();
                    for (j, p) in parts.iter().enumerate() {
                        axpy(slot(&mut grads, &nodes, *p), &g_data[j * inner..(j + 1) * inner]);
                    }
                }
                Op::CrossEntropy { p, label } => {
                    let q = val(*p).data()[*label];
                    if q >= T::of(CE_CLAMP) {
                        slot(&mut grads, &nodes, *p)[*label] -= g_data[0] / q;
                    } else {
                        slot(&mut grads, &nodes, *p);
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn axpy<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn slot<'a, T: Scalar>(grads: &'a mut [Option<Tensor<T>>], nodes: &[Node<T>], v: Var) -> &'a mut [T] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape().to_vec()))
        .data_mut()
}

fn take_slot<T: Scalar>(grads: &mut [Option<Tensor<T>>], nodes: &[Node<T>], v: Var) -> Tensor<T> {
    grads[v.0]
        .take()
        .unwrap_or_else(|| Tensor::zeros(nodes[v.0].value.shape().to_vec()))
}

/// Return a taken slot; adds when the same node was taken twice by one op.
fn put<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, t: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => axpy(existing.data_mut(), t.data()),
        empty => *empty = Some(t),
    }
}

/// Gradients of a backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn square_derivative_at_three() {
        let g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let g = Graph::new();
        let x = g.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 9.0, -1.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn conv_example_from_direct_loop() {
        // x=[1,2,3], w=[1,1], k=2 → [0+1, 1+2, 2+3]
        let g = Graph::new();
        let x = g.leaf(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let w = g.leaf(t(&[1, 1, 2], &[1.0, 1.0]));
        let b = g.leaf(t(&[1], &[0.0]));
        let y = g.causal_conv1d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn conv_identity_kernel_is_current_tap() {
        let g = Graph::new();
        let xs = [0.3, -1.0, 2.0, 4.5, 0.0, 7.0];
        let x = g.leaf(t(&[1, 6], &xs));
        let w = g.leaf(t(&[1, 1, 5], &[0.0, 0.0, 0.0, 0.0, 1.0]));
        let b = g.leaf(t(&[1], &[0.0]));
        for d in 1..=3 {
            let y = g.causal_conv1d(x, w, b, d).unwrap();
            assert_eq!(g.value(y).data(), &xs);
        }
    }

    #[test]
    fn conv_pads_k_minus_one_zeros_on_the_left() {
        // k=5: with only tap 0 set, y[t] = x[t-4], so the first four outputs
        // see padding.
        let g = Graph::new();
        let x = g.leaf(t(&[1, 7], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]));
        let w = g.leaf(t(&[1, 1, 5], &[1.0, 0.0, 0.0, 0.0, 0.0]));
        let b = g.leaf(t(&[1], &[0.0]));
        let y = g.causal_conv1d(x, w, b, 1).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_rejects_mismatched_channels() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros([2, 5]));
        let w = g.leaf(Tensor::zeros([1, 3, 2]));
        let b = g.leaf(Tensor::zeros([1]));
        assert!(g.causal_conv1d(x, w, b, 1).is_err());
        let w = g.leaf(Tensor::zeros([1, 2, 2]));
        assert!(g.causal_conv1d(x, w, b, 0).is_err());
    }

    #[test]
    fn linear_identity_and_zero_weight() {
        let g = Graph::new();
        let x = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let eye = g.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let zero_b = g.leaf(t(&[2], &[0.0, 0.0]));
        let y = g.linear(x, eye, Some(zero_b)).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());

        let zero_w = g.leaf(Tensor::zeros([3, 2]));
        let b = g.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let y = g.linear(x, zero_w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
        assert!(g.linear(x, b, None).is_err());
    }

    #[test]
    fn linear_matches_scalar_loop() {
        let xs = [0.5, -1.5, 2.0, 3.0, 0.25, -0.75];
        let ws = [1.0, 2.0, 3.0, -1.0, 0.5, 4.0];
        let bs = [0.1, -0.2];
        let g = Graph::new();
        let x = g.leaf(t(&[2, 3], &xs));
        let w = g.leaf(t(&[2, 3], &ws));
        let b = g.leaf(t(&[2], &bs));
        let y = g.linear(x, w, Some(b)).unwrap();
        let mut expected = [0.0; 4];
        for r in 0..2 {
            for o in 0..2 {
                let mut acc = bs[o];
                for i in 0..3 {
                    acc += xs[r * 3 + i] * ws[o * 3 + i];
                }
                expected[r * 2 + o] = acc;
            }
        }
        assert_eq!(g.value(y).data(), &expected);
    }

    #[test]
    fn softmax_basic_cases() {
        let g = Graph::new();
        let x = g.leaf(t(&[1, 2], &[0.0, 0.0]));
        let y = g.softmax_rows(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.leaf(t(&[1, 2], &[3.7, f64::NEG_INFINITY]));
        let y = g.softmax_rows(x).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);

        let x = g.leaf(t(&[1, 2], &[f64::NEG_INFINITY, f64::NEG_INFINITY]));
        assert!(g.softmax_rows(x).is_err());
    }

    #[test]
    fn mask_modes() {
        let g = Graph::new();
        let one = g.leaf(t(&[1, 1], &[4.0]));
        let m = g.lower_triangular_mask(one, MaskMode::NegInf).unwrap();
        assert_eq!(g.value(m).data(), &[4.0]);

        let s = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let m = g.lower_triangular_mask(s, MaskMode::NegInf).unwrap();
        assert_eq!(g.value(m).data(), &[1.0, f64::NEG_INFINITY, 3.0, 4.0]);
        let m = g.lower_triangular_mask(s, MaskMode::ZeroLiteral).unwrap();
        assert_eq!(g.value(m).data(), &[1.0, 0.0, 3.0, 4.0]);

        let rect = g.leaf(Tensor::zeros([2, 3]));
        assert!(g.lower_triangular_mask(rect, MaskMode::NegInf).is_err());
    }

    #[test]
    fn relu_and_dropout_semantics() {
        let g = Graph::new();
        let x = g.leaf(t(&[3], &[-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let d = g.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(d, x);
        assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
        assert!(g.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_zero_fraction_concentrates() {
        let n = 1_000_000;
        let g = Graph::new();
        let x = g.leaf(Tensor::<f64>::ones([n]));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let d = g.dropout(x, 0.5, true, &mut rng).unwrap();
        let v = g.value(d);
        let zeros = v.data().iter().filter(|&&z| z == 0.0).count();
        let frac = zeros as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.002, "zero fraction {frac}");
        assert!(v.data().iter().all(|&z| z == 0.0 || z == 2.0));
    }

    #[test]
    fn cross_entropy_values() {
        let g = Graph::new();
        let uniform = g.leaf(Tensor::full([12], 1.0 / 12.0));
        let l = g.cross_entropy(uniform, 3).unwrap();
        assert!((g.value(l).item() - 12f64.ln()).abs() < 1e-12);

        let onehot = g.leaf(t(&[3], &[0.0, 1.0, 0.0]));
        let l = g.cross_entropy(onehot, 1).unwrap();
        assert_eq!(g.value(l).item(), 0.0);

        let half = g.leaf(t(&[2], &[0.5, 0.5]));
        let l = g.cross_entropy(half, 0).unwrap();
        assert!((g.value(l).item() - 2f64.ln()).abs() < 1e-15);

        let l = g.cross_entropy(onehot, 0).unwrap();
        assert!((g.value(l).item() - 1e12f64.ln()).abs() < 1e-9);

        let bad = g.leaf(t(&[2], &[0.5, 0.6]));
        assert!(g.cross_entropy(bad, 0).is_err());
    }

    #[test]
    fn mean_select_stack_shapes() {
        let g = Graph::new();
        let x = g.leaf(Tensor::from_fn([2, 3, 4], |i| i as f64));
        let m = g.mean_over_axis(x, 1).unwrap();
        assert_eq!(g.shape(m), vec![2, 4]);
        assert_eq!(g.value(m).at(&[1, 2]), (14.0 + 18.0 + 22.0) / 3.0);
        let s = g.select(x, 2, 3).unwrap();
        assert_eq!(g.shape(s), vec![2, 3]);
        assert_eq!(g.value(s).at(&[1, 1]), 19.0);
        let st = g.stack(&[s, s]).unwrap();
        assert_eq!(g.shape(st), vec![2, 2, 3]);
    }
}
