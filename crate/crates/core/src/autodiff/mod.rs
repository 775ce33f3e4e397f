//! Tape-based reverse-mode automatic differentiation over dense vectors and
//! matrices.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value. [`Tape::backward`] walks the nodes in reverse creation order,
//! which is a reverse topological order because a node can only reference
//! nodes created before it. Gradients accumulate with `+=`, so a value used
//! at many places (an embedding table read at every timestep) collects the
//! sum of all its contributions.
//!
//! ```
//! use softdecode::autodiff::Tape;
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param_scalar(3.0);
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.scalar(y), 9.0);
//! assert_eq!(grads.scalar(x), 6.0);
//! ```

mod check;

pub use check::{finite_difference_gradient, max_relative_error, try_finite_difference_gradient};

use crate::error::{Error, Result, Shape};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, T),
    ScaleBy(usize, usize),
    MatVec(usize, usize),
    MatTVec(usize, usize),
    Dot(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Sum(usize),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Slice(usize, usize),
    Pick(usize, usize),
    Row(usize, usize),
}

impl<T> Op<T> {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::ScaleBy(..) => "scale_by",
            Op::MatVec(..) => "matvec",
            Op::MatTVec(..) => "mat_t_vec",
            Op::Dot(..) => "dot",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Sum(..) => "sum",
            Op::Concat(..) => "concat",
            Op::Stack(..) => "stack",
            Op::Slice(..) => "slice",
            Op::Pick(..) => "pick",
            Op::Row(..) => "row",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Shape,
    op: Op<T>,
    /// Whether any tracked leaf reaches this node.
    tracked: bool,
}

/// Ordered record of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> &[T] {
        &self.grads[var.0]
    }

    pub fn scalar(&self, var: Var) -> T {
        self.grads[var.0][0]
    }
}

fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Numerically stable softmax of a plain slice.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node and re-arms the tape for a new forward pass.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn value(&self, var: Var) -> &[T] {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> Shape {
        self.nodes[var.0].shape
    }

    pub fn scalar(&self, var: Var) -> T {
        self.nodes[var.0].value[0]
    }

    /// Name of the operation that produced `var`.
    pub fn op_tag(&self, var: Var) -> &'static str {
        self.nodes[var.0].op.tag()
    }

    pub fn is_tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn leaf(&mut self, shape: Shape, value: Vec<T>, tracked: bool) -> Result<Var> {
        if value.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                left: shape,
                right: Shape::vector(value.len()),
            });
        }
        self.push(Op::Leaf, shape, value, tracked)
    }

    /// Leaf whose gradient is wanted.
    pub fn param(&mut self, shape: Shape, value: Vec<T>) -> Result<Var> {
        self.leaf(shape, value, true)
    }

    /// Leaf treated as a constant by [`Tape::backward`].
    pub fn constant(&mut self, shape: Shape, value: Vec<T>) -> Result<Var> {
        self.leaf(shape, value, false)
    }

    pub fn param_vector(&mut self, value: Vec<T>) -> Result<Var> {
        let shape = Shape::vector(value.len());
        self.param(shape, value)
    }

    pub fn constant_vector(&mut self, value: Vec<T>) -> Result<Var> {
        let shape = Shape::vector(value.len());
        self.constant(shape, value)
    }

    pub fn param_scalar(&mut self, x: T) -> Var {
        self.push_unchecked(Op::Leaf, Shape::SCALAR, vec![x], true)
    }

    pub fn constant_scalar(&mut self, x: T) -> Var {
        self.push_unchecked(Op::Leaf, Shape::SCALAR, vec![x], false)
    }

    /// Copies the value of `var` into a fresh constant; no gradient flows back.
    pub fn stop_gradient(&mut self, var: Var) -> Var {
        let node = &self.nodes[var.0];
        let (shape, value) = (node.shape, node.value.clone());
        self.push_unchecked(Op::Leaf, shape, value, false)
    }

    fn push_unchecked(&mut self, op: Op<T>, shape: Shape, value: Vec<T>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            shape,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op<T>, shape: Shape, value: Vec<T>, tracked: bool) -> Result<Var> {
        debug_assert_eq!(shape.len(), value.len());
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: op.tag() });
        }
        Ok(self.push_unchecked(op, shape, value, tracked))
    }

    fn tracked(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].tracked)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(sa)
    }

    fn require_vector(&self, op: &'static str, a: Var) -> Result<usize> {
        let s = self.shape(a);
        if !s.is_vector() {
            return Err(Error::ShapeMismatch {
                op,
                left: s,
                right: Shape::vector(s.len()),
            });
        }
        Ok(s.rows)
    }

    fn zip_with(&mut self, op: Op<T>, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Var> {
        let shape = self.same_shape(op.tag(), a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let tracked = self.tracked(&[a.0, b.0]);
        self.push(op, shape, value, tracked)
    }

    fn map(&mut self, op: Op<T>, a: Var, f: impl Fn(T) -> T) -> Result<Var> {
        let node = &self.nodes[a.0];
        let value = node.value.iter().map(|&x| f(x)).collect();
        let (shape, tracked) = (node.shape, node.tracked);
        self.push(op, shape, value, tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Add(a.0, b.0), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Sub(a.0, b.0), a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Mul(a.0, b.0), a, b, |x, y| x * y)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Neg(a.0), a, |x| -x)
    }

    /// Multiplies by a constant factor.
    pub fn scale(&mut self, a: Var, k: T) -> Result<Var> {
        self.map(Op::Scale(a.0, k), a, |x| x * k)
    }

    /// Multiplies every entry of `a` by the scalar node `k`.
    pub fn scale_by(&mut self, a: Var, k: Var) -> Result<Var> {
        let ks = self.shape(k);
        if ks != Shape::SCALAR {
            return Err(Error::ShapeMismatch {
                op: "scale_by",
                left: ks,
                right: Shape::SCALAR,
            });
        }
        let kv = self.scalar(k);
        let node = &self.nodes[a.0];
        let value = node.value.iter().map(|&x| x * kv).collect();
        let shape = node.shape;
        let tracked = self.tracked(&[a.0, k.0]);
        self.push(Op::ScaleBy(a.0, k.0), shape, value, tracked)
    }

    /// `m · x` for an `r x c` matrix and a length-`c` vector.
    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let ms = self.shape(m);
        let xs = self.shape(x);
        if !xs.is_vector() || xs.rows != ms.cols {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                left: ms,
                right: xs,
            });
        }
        let mv = &self.nodes[m.0].value;
        let xv = &self.nodes[x.0].value;
        let c = ms.cols;
        let value = (0..ms.rows)
            .map(|r| {
                mv[r * c..(r + 1) * c]
                    .iter()
                    .zip(xv)
                    .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
            })
            .collect();
        let tracked = self.tracked(&[m.0, x.0]);
        self.push(Op::MatVec(m.0, x.0), Shape::vector(ms.rows), value, tracked)
    }

    /// `mᵀ · x` for an `r x c` matrix and a length-`r` vector.
    pub fn mat_t_vec(&mut self, m: Var, x: Var) -> Result<Var> {
        let ms = self.shape(m);
        let xs = self.shape(x);
        if !xs.is_vector() || xs.rows != ms.rows {
            return Err(Error::ShapeMismatch {
                op: "mat_t_vec",
                left: ms,
                right: xs,
            });
        }
        let mv = &self.nodes[m.0].value;
        let xv = &self.nodes[x.0].value;
        let mut value = vec![T::zero(); ms.cols];
        for (r, &w) in xv.iter().enumerate() {
            let row = &mv[r * ms.cols..(r + 1) * ms.cols];
            for (out, &m_rc) in value.iter_mut().zip(row) {
                *out += w * m_rc;
            }
        }
        let tracked = self.tracked(&[m.0, x.0]);
        self.push(Op::MatTVec(m.0, x.0), Shape::vector(ms.cols), value, tracked)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        let tracked = self.tracked(&[a.0, b.0]);
        self.push(Op::Dot(a.0, b.0), Shape::SCALAR, vec![value], tracked)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Tanh(a.0), a, T::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Sigmoid(a.0), a, sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Exp(a.0), a, T::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Log(a.0), a, T::ln)
    }

    /// Softmax over a vector, computed with max-subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.require_vector("softmax", a)?;
        if self.shape(a).is_empty() {
            return Err(Error::Empty("softmax"));
        }
        let node = &self.nodes[a.0];
        let value = softmax(&node.value);
        let (shape, tracked) = (node.shape, node.tracked);
        self.push(Op::Softmax(a.0), shape, value, tracked)
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.require_vector("log_softmax", a)?;
        if self.shape(a).is_empty() {
            return Err(Error::Empty("log_softmax"));
        }
        let node = &self.nodes[a.0];
        let max = node.value.iter().copied().fold(T::neg_infinity(), T::max);
        let log_total = node.value.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp()).ln();
        let value = node.value.iter().map(|&x| x - max - log_total).collect();
        let (shape, tracked) = (node.shape, node.tracked);
        self.push(Op::LogSoftmax(a.0), shape, value, tracked)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let node = &self.nodes[a.0];
        let total = node.value.iter().fold(T::zero(), |acc, &x| acc + x);
        let tracked = node.tracked;
        self.push(Op::Sum(a.0), Shape::SCALAR, vec![total], tracked)
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat"));
        }
        let mut value = Vec::new();
        for &p in parts {
            self.require_vector("concat", p)?;
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let tracked = self.tracked(&ids);
        let shape = Shape::vector(value.len());
        self.push(Op::Concat(ids), shape, value, tracked)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or(Error::Empty("stack"))?;
        let width = self.require_vector("stack", first)?;
        let mut value = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let s = self.shape(r);
            if s != Shape::vector(width) {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    left: Shape::vector(width),
                    right: s,
                });
            }
            value.extend_from_slice(&self.nodes[r.0].value);
        }
        let ids: Vec<usize> = rows.iter().map(|p| p.0).collect();
        let tracked = self.tracked(&ids);
        self.push(Op::Stack(ids), Shape::matrix(rows.len(), width), value, tracked)
    }

    /// Contiguous sub-vector `a[start..start + len]`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.require_vector("slice", a)?;
        if start + len > n {
            return Err(Error::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: n,
            });
        }
        let node = &self.nodes[a.0];
        let value = node.value[start..start + len].to_vec();
        let tracked = node.tracked;
        self.push(Op::Slice(a.0, start), Shape::vector(len), value, tracked)
    }

    /// Scalar entry `a[index]`.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let n = self.shape(a).len();
        if index >= n {
            return Err(Error::IndexOutOfRange {
                op: "pick",
                index,
                len: n,
            });
        }
        let node = &self.nodes[a.0];
        let value = vec![node.value[index]];
        let tracked = node.tracked;
        self.push(Op::Pick(a.0, index), Shape::SCALAR, value, tracked)
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, m: Var, index: usize) -> Result<Var> {
        let s = self.shape(m);
        if index >= s.rows {
            return Err(Error::IndexOutOfRange {
                op: "row",
                index,
                len: s.rows,
            });
        }
        let node = &self.nodes[m.0];
        let value = node.value[index * s.cols..(index + 1) * s.cols].to_vec();
        let tracked = node.tracked;
        self.push(Op::Row(m.0, index), Shape::vector(s.cols), value, tracked)
    }

    /// Propagates adjoints from a scalar `root` to every node on the tape.
    ///
    /// A tape can be differentiated once; call [`Tape::clear`] and re-run the
    /// forward pass before differentiating again.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let root_shape = self.shape(root);
        if root_shape != Shape::SCALAR {
            return Err(Error::NonScalarRoot(root_shape));
        }
        self.consumed = true;

        let mut grads: Vec<Vec<T>> = self.nodes.iter().map(|n| vec![T::zero(); n.value.len()]).collect();
        grads[root.0][0] = T::one();

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let g = &upper[0];
            if g.iter().all(|x| x.is_zero()) {
                continue;
            }
            self.propagate(i, g, lower);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &[T], lower: &mut [Vec<T>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let y = &node.value;
        let live = |j: usize| nodes[j].tracked;
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                for j in [a, b] {
                    if live(j) {
                        add_into(&mut lower[j], g);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if live(a) {
                    add_into(&mut lower[a], g);
                }
                if live(b) {
                    for (d, &gi) in lower[b].iter_mut().zip(g) {
                        *d -= gi;
                    }
                }
            }
            &Op::Mul(a, b) => {
                if live(a) {
                    let bv = &nodes[b].value;
                    for ((d, &gi), &v) in lower[a].iter_mut().zip(g).zip(bv) {
                        *d += gi * v;
                    }
                }
                if live(b) {
                    let av = &nodes[a].value;
                    for ((d, &gi), &v) in lower[b].iter_mut().zip(g).zip(av) {
                        *d += gi * v;
                    }
                }
            }
            &Op::Neg(a) => {
                for (d, &gi) in lower[a].iter_mut().zip(g) {
                    *d -= gi;
                }
            }
            &Op::Scale(a, k) => {
                for (d, &gi) in lower[a].iter_mut().zip(g) {
                    *d += gi * k;
                }
            }
            &Op::ScaleBy(a, k) => {
                let kv = nodes[k].value[0];
                let av = &nodes[a].value;
                if live(a) {
                    for (d, &gi) in lower[a].iter_mut().zip(g) {
                        *d += gi * kv;
                    }
                }
                if live(k) {
                    let s = g.iter().zip(av).fold(T::zero(), |acc, (&gi, &x)| acc + gi * x);
                    lower[k][0] += s;
                }
            }
            &Op::MatVec(m, x) => {
                let cols = nodes[m].shape.cols;
                if live(m) {
                    let xv = &nodes[x].value;
                    let gm = &mut lower[m];
                    for (r, &gi) in g.iter().enumerate() {
                        if gi.is_zero() {
                            continue;
                        }
                        for (d, &v) in gm[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                            *d += gi * v;
                        }
                    }
                }
                if live(x) {
                    let mv = &nodes[m].value;
                    let gx = &mut lower[x];
                    for (r, &gi) in g.iter().enumerate() {
                        if gi.is_zero() {
                            continue;
                        }
                        for (d, &w) in gx.iter_mut().zip(&mv[r * cols..(r + 1) * cols]) {
                            *d += gi * w;
                        }
                    }
                }
            }
            &Op::MatTVec(m, x) => {
                let cols = nodes[m].shape.cols;
                let xv = &nodes[x].value;
                if live(m) {
                    let gm = &mut lower[m];
                    for (r, &xr) in xv.iter().enumerate() {
                        for (d, &gi) in gm[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                            *d += xr * gi;
                        }
                    }
                }
                if live(x) {
                    let mv = &nodes[m].value;
                    let gx = &mut lower[x];
                    for (r, d) in gx.iter_mut().enumerate() {
                        let row = &mv[r * cols..(r + 1) * cols];
                        *d += row.iter().zip(g).fold(T::zero(), |acc, (&w, &gi)| acc + w * gi);
                    }
                }
            }
            &Op::Dot(a, b) => {
                let g0 = g[0];
                if live(a) {
                    for (d, &v) in lower[a].iter_mut().zip(&nodes[b].value) {
                        *d += g0 * v;
                    }
                }
                if live(b) {
                    for (d, &v) in lower[b].iter_mut().zip(&nodes[a].value) {
                        *d += g0 * v;
                    }
                }
            }
            &Op::Tanh(a) => {
                for ((d, &gi), &yi) in lower[a].iter_mut().zip(g).zip(y) {
                    *d += gi * (T::one() - yi * yi);
                }
            }
            &Op::Sigmoid(a) => {
                for ((d, &gi), &yi) in lower[a].iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (T::one() - yi);
                }
            }
            &Op::Exp(a) => {
                for ((d, &gi), &yi) in lower[a].iter_mut().zip(g).zip(y) {
                    *d += gi * yi;
                }
            }
            &Op::Log(a) => {
                for ((d, &gi), &xi) in lower[a].iter_mut().zip(g).zip(&nodes[a].value) {
                    *d += gi / xi;
                }
            }
            &Op::Softmax(a) => {
                let gy = g.iter().zip(y).fold(T::zero(), |acc, (&gi, &yi)| acc + gi * yi);
                for ((d, &gi), &yi) in lower[a].iter_mut().zip(g).zip(y) {
                    *d += yi * (gi - gy);
                }
            }
            &Op::LogSoftmax(a) => {
                let gsum = g.iter().fold(T::zero(), |acc, &gi| acc + gi);
                for ((d, &gi), &yi) in lower[a].iter_mut().zip(g).zip(y) {
                    *d += gi - yi.exp() * gsum;
                }
            }
            &Op::Sum(a) => {
                let g0 = g[0];
                for d in lower[a].iter_mut() {
                    *d += g0;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = nodes[p].value.len();
                    if live(p) {
                        add_into(&mut lower[p], &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::Stack(rows) => {
                let width = node.shape.cols;
                for (r, &p) in rows.iter().enumerate() {
                    if live(p) {
                        add_into(&mut lower[p], &g[r * width..(r + 1) * width]);
                    }
                }
            }
            &Op::Slice(a, start) => {
                add_into(&mut lower[a][start..start + g.len()], g);
            }
            &Op::Pick(a, index) => {
                lower[a][index] += g[0];
            }
            &Op::Row(m, index) => {
                let cols = nodes[m].shape.cols;
                add_into(&mut lower[m][index * cols..(index + 1) * cols], g);
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
