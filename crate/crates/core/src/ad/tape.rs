//! Dynamic reverse-mode tape over dense `f64` vectors and matrices.
//!
//! Every operation appends a node holding its forward value in one flat
//! buffer. Inputs always precede their consumers, so the creation order is a
//! topological order and [`Tape::backward`] can sweep it in reverse.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dims {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Dims {
    pub fn len(self) -> usize {
        match self {
            Dims::Scalar => 1,
            Dims::Vector(n) => n,
            Dims::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    fn to_shape(self) -> Vec<usize> {
        match self {
            Dims::Scalar => vec![],
            Dims::Vector(n) => vec![n],
            Dims::Matrix(r, c) => vec![r, c],
        }
    }

    fn from_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [] => Ok(Dims::Scalar),
            [n] => Ok(Dims::Vector(n)),
            [r, c] => Ok(Dims::Matrix(r, c)),
            _ => Err(Error::dim(
                "tape leaf",
                format!("rank {} tensors are not supported on the tape", shape.len()),
            )),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `x + alpha * y`
    Axpy(Var, f64, Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    Huber(Var, f64),
    Sum(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Mean(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    offset: usize,
    dims: Dims,
    requires_grad: bool,
}

/// Append-only computation record.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
}

/// Adjoints produced by one backward sweep.
pub struct Gradients<'t> {
    tape: &'t Tape,
    adjoints: Vec<f64>,
}

impl Gradients<'_> {
    /// Adjoint of `v`. Nodes that do not depend on any parameter read as zero.
    pub fn get(&self, v: Var) -> &[f64] {
        let n = &self.tape.nodes[v.0];
        &self.adjoints[n.offset..n.offset + n.dims.len()]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.tape.nodes[v.0];
        Tensor::new(n.dims.to_shape(), self.get(v).to_vec()).expect("dims and data agree")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, values: usize) -> Self {
        Tape {
            nodes: Vec::with_capacity(nodes),
            values: Vec::with_capacity(values),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every node, keeping allocations for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
    }

    pub fn dims(&self, v: Var) -> Dims {
        self.nodes[v.0].dims
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        &self.values[n.offset..n.offset + n.dims.len()]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].dims.to_shape(), self.value(v).to_vec()).expect("dims and data agree")
    }

    fn push<F>(&mut self, op: Op, dims: Dims, requires_grad: bool, fill: F) -> Var
    where
        F: FnOnce(&[f64], &[Node], &mut [f64]),
    {
        let offset = self.values.len();
        self.values.resize(offset + dims.len(), 0.0);
        let (prev, out) = self.values.split_at_mut(offset);
        fill(prev, &self.nodes, out);
        self.nodes.push(Node {
            op,
            offset,
            dims,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf_impl(&mut self, dims: Dims, data: &[f64], requires_grad: bool) -> Var {
        self.push(Op::Leaf, dims, requires_grad, |_, _, out| out.copy_from_slice(data))
    }

    /// Constant input. Gradients are not propagated into it.
    pub fn constant(&mut self, t: &Tensor) -> Result<Var> {
        let dims = Dims::from_shape(t.shape())?;
        Ok(self.leaf_impl(dims, t.data(), false))
    }

    pub fn constant_vector(&mut self, data: &[f64]) -> Var {
        self.leaf_impl(Dims::Vector(data.len()), data, false)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.push(Op::Leaf, Dims::Vector(n), false, |_, _, _| {})
    }

    /// Differentiable input (a parameter or anything whose adjoint is wanted).
    pub fn param(&mut self, t: &Tensor) -> Result<Var> {
        let dims = Dims::from_shape(t.shape())?;
        Ok(self.leaf_impl(dims, t.data(), true))
    }

    pub fn param_vector(&mut self, data: &[f64]) -> Var {
        self.leaf_impl(Dims::Vector(data.len()), data, true)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn req(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<Dims> {
        let (da, db) = (self.node(a).dims, self.node(b).dims);
        if da != db {
            return Err(Error::dim(op, format!("{da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn vector_len(&self, op: &'static str, v: Var) -> Result<usize> {
        match self.node(v).dims {
            Dims::Vector(n) => Ok(n),
            d => Err(Error::dim(op, format!("expected a vector, got {d:?}"))),
        }
    }

    /// `y = W x` for `W: r×c`, `x: c`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (r, c) = match self.node(w).dims {
            Dims::Matrix(r, c) => (r, c),
            d => return Err(Error::dim("matvec", format!("W must be a matrix, got {d:?}"))),
        };
        let xn = self.vector_len("matvec", x)?;
        if xn != c {
            return Err(Error::dim("matvec", format!("W is {r}x{c}, x has length {xn}")));
        }
        let rg = self.req(&[w, x]);
        let (wo, xo) = (self.node(w).offset, self.node(x).offset);
        Ok(self.push(Op::MatVec(w, x), Dims::Vector(r), rg, |vals, _, out| {
            let xs = &vals[xo..xo + c];
            for (i, y) in out.iter_mut().enumerate() {
                *y = dot(&vals[wo + i * c..wo + (i + 1) * c], xs);
            }
        }))
    }

    fn zip_op(&mut self, name: &'static str, op: Op, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<Var> {
        let dims = self.same_dims(name, a, b)?;
        let rg = self.req(&[a, b]);
        let (ao, bo, n) = (self.node(a).offset, self.node(b).offset, dims.len());
        Ok(self.push(op, dims, rg, |vals, _, out| {
            for ((y, &p), &q) in out.iter_mut().zip(&vals[ao..ao + n]).zip(&vals[bo..bo + n]) {
                *y = f(p, q);
            }
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", Op::Add(a, b), a, b, |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", Op::Sub(a, b), a, b, |p, q| p - q)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", Op::Mul(a, b), a, b, |p, q| p * q)
    }

    /// `x + alpha * y`
    pub fn axpy(&mut self, x: Var, alpha: f64, y: Var) -> Result<Var> {
        let dims = self.same_dims("axpy", x, y)?;
        let rg = self.req(&[x, y]);
        let (xo, yo, n) = (self.node(x).offset, self.node(y).offset, dims.len());
        Ok(self.push(Op::Axpy(x, alpha, y), dims, rg, |vals, _, out| {
            for ((o, &p), &q) in out.iter_mut().zip(&vals[xo..xo + n]).zip(&vals[yo..yo + n]) {
                *o = p + alpha * q;
            }
        }))
    }

    fn map_op(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let dims = self.node(a).dims;
        let rg = self.req(&[a]);
        let (ao, n) = (self.node(a).offset, dims.len());
        self.push(op, dims, rg, |vals, _, out| {
            for (y, &p) in out.iter_mut().zip(&vals[ao..ao + n]) {
                *y = f(p);
            }
        })
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        self.map_op(Op::Scale(a, alpha), a, |p| alpha * p)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_op(Op::Tanh(a), a, f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_op(Op::Relu(a), a, |p| p.max(0.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map_op(Op::Square(a), a, |p| p * p)
    }

    /// Elementwise Huber penalty: `r²/2` for `|r| ≤ delta`, else `delta (|r| − delta/2)`.
    pub fn huber(&mut self, a: Var, delta: f64) -> Result<Var> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParam(format!("huber delta must be > 0, got {delta}")));
        }
        Ok(self.map_op(Op::Huber(a, delta), a, move |r| {
            if r.abs() <= delta {
                0.5 * r * r
            } else {
                delta * (r.abs() - 0.5 * delta)
            }
        }))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let rg = self.req(&[a]);
        let (ao, n) = (self.node(a).offset, self.node(a).dims.len());
        self.push(Op::Sum(a), Dims::Scalar, rg, |vals, _, out| {
            out[0] = vals[ao..ao + n].iter().sum();
        })
    }

    /// Concatenate vectors in argument order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut total = 0;
        for &p in parts {
            total += self.vector_len("concat", p)?;
        }
        let rg = self.req(parts);
        let spans: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| (self.node(p).offset, self.node(p).dims.len()))
            .collect();
        Ok(
            self.push(Op::Concat(parts.to_vec()), Dims::Vector(total), rg, |vals, _, out| {
                let mut at = 0;
                for &(o, n) in &spans {
                    out[at..at + n].copy_from_slice(&vals[o..o + n]);
                    at += n;
                }
            }),
        )
    }

    /// Contiguous window `[lo, hi)` of a vector.
    pub fn slice(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var> {
        let n = self.vector_len("slice", x)?;
        if lo > hi || hi > n {
            return Err(Error::Index {
                op: "slice",
                index: if lo > hi { lo } else { hi },
                len: n,
            });
        }
        let rg = self.req(&[x]);
        let xo = self.node(x).offset;
        Ok(self.push(Op::Slice(x, lo), Dims::Vector(hi - lo), rg, |vals, _, out| {
            out.copy_from_slice(&vals[xo + lo..xo + hi]);
        }))
    }

    /// Elementwise arithmetic mean of equal-length vectors.
    ///
    /// Each component is summed over the inputs' values in ascending order, so
    /// the result is independent of the order in which the inputs are listed.
    pub fn mean(&mut self, vs: &[Var]) -> Result<Var> {
        let first = *vs.first().ok_or_else(|| Error::dim("mean", "empty input set"))?;
        let p = self.vector_len("mean", first)?;
        for &v in vs {
            let n = self.vector_len("mean", v)?;
            if n != p {
                return Err(Error::dim("mean", format!("lengths {p} and {n}")));
            }
        }
        let rg = self.req(vs);
        let offsets: Vec<usize> = vs.iter().map(|&v| self.node(v).offset).collect();
        let count = vs.len() as f64;
        Ok(self.push(Op::Mean(vs.to_vec()), Dims::Vector(p), rg, |vals, _, out| {
            let mut column = Vec::with_capacity(offsets.len());
            for (j, y) in out.iter_mut().enumerate() {
                column.clear();
                column.extend(offsets.iter().map(|&o| vals[o + j]));
                column.sort_by(f64::total_cmp);
                *y = column.iter().sum::<f64>() / count;
            }
        }))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<'_>> {
        let rn = &self.nodes[root.0];
        if rn.dims.len() != 1 {
            return Err(Error::dim(
                "backward",
                format!("root must be scalar, got {:?}", rn.dims),
            ));
        }
        let mut adj = vec![0.0; self.values.len()];
        adj[rn.offset] = 1.0;
        let vals = &self.values;

        for node in self.nodes[..=root.0].iter().rev() {
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let len = node.dims.len();
            let (lower, upper) = adj.split_at_mut(node.offset);
            let g = &upper[..len];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let span = |v: Var| {
                let n = &self.nodes[v.0];
                (n.offset, n.dims.len(), n.requires_grad)
            };
            match node.op {
                Op::Leaf => {}
                Op::MatVec(w, x) => {
                    let (wo, _, wr) = span(w);
                    let (xo, c, xr) = span(x);
                    if wr {
                        let xs = &vals[xo..xo + c];
                        for (i, &gi) in g.iter().enumerate() {
                            let row = &mut lower[wo + i * c..wo + (i + 1) * c];
                            for (a, &xj) in row.iter_mut().zip(xs) {
                                *a += gi * xj;
                            }
                        }
                    }
                    if xr {
                        let gx = &mut lower[xo..xo + c];
                        for (i, &gi) in g.iter().enumerate() {
                            let row = &vals[wo + i * c..wo + (i + 1) * c];
                            for (a, &wij) in gx.iter_mut().zip(row) {
                                *a += wij * gi;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        let (o, n, r) = span(v);
                        if r {
                            for (t, &gi) in lower[o..o + n].iter_mut().zip(g) {
                                *t += gi;
                            }
                        }
                    }
                }
                Op::Sub(a, b) => {
                    for (v, s) in [(a, 1.0), (b, -1.0)] {
                        let (o, n, r) = span(v);
                        if r {
                            for (t, &gi) in lower[o..o + n].iter_mut().zip(g) {
                                *t += s * gi;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ao, n, ar) = span(a);
                    let (bo, _, br) = span(b);
                    if ar {
                        for i in 0..n {
                            lower[ao + i] += g[i] * vals[bo + i];
                        }
                    }
                    if br {
                        for i in 0..n {
                            lower[bo + i] += g[i] * vals[ao + i];
                        }
                    }
                }
                Op::Scale(a, alpha) => {
                    let (o, n, _) = span(a);
                    for (t, &gi) in lower[o..o + n].iter_mut().zip(g) {
                        *t += alpha * gi;
                    }
                }
                Op::Axpy(x, alpha, y) => {
                    for (v, s) in [(x, 1.0), (y, alpha)] {
                        let (o, n, r) = span(v);
                        if r {
                            for (t, &gi) in lower[o..o + n].iter_mut().zip(g) {
                                *t += s * gi;
                            }
                        }
                    }
                }
                Op::Tanh(a) => {
                    let (o, n, _) = span(a);
                    let ys = &vals[node.offset..node.offset + len];
                    for i in 0..n {
                        lower[o + i] += g[i] * (1.0 - ys[i] * ys[i]);
                    }
                }
                Op::Relu(a) => {
                    let (o, n, _) = span(a);
                    for i in 0..n {
                        if vals[o + i] > 0.0 {
                            lower[o + i] += g[i];
                        }
                    }
                }
                Op::Square(a) => {
                    let (o, n, _) = span(a);
                    for i in 0..n {
                        lower[o + i] += 2.0 * vals[o + i] * g[i];
                    }
                }
                Op::Huber(a, delta) => {
                    let (o, n, _) = span(a);
                    for i in 0..n {
                        let r = vals[o + i];
                        let d = if r.abs() <= delta { r } else { delta * r.signum() };
                        lower[o + i] += d * g[i];
                    }
                }
                Op::Sum(a) => {
                    let (o, n, _) = span(a);
                    for t in &mut lower[o..o + n] {
                        *t += g[0];
                    }
                }
                Op::Concat(ref parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let (o, n, r) = span(p);
                        if r {
                            for (t, &gi) in lower[o..o + n].iter_mut().zip(&g[at..at + n]) {
                                *t += gi;
                            }
                        }
                        at += n;
                    }
                }
                Op::Slice(x, lo) => {
                    let (o, _, _) = span(x);
                    for (t, &gi) in lower[o + lo..o + lo + len].iter_mut().zip(g) {
                        *t += gi;
                    }
                }
                Op::Mean(ref vs) => {
                    let inv = 1.0 / vs.len() as f64;
                    for &v in vs {
                        let (o, n, r) = span(v);
                        if r {
                            for (t, &gi) in lower[o..o + n].iter_mut().zip(g) {
                                *t += gi * inv;
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients {
            tape: self,
            adjoints: adj,
        })
    }

    /// Post-hoc validity check: index of the first node holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<Var> {
        self.nodes
            .iter()
            .position(|n| {
                self.values[n.offset..n.offset + n.dims.len()]
                    .iter()
                    .any(|v| !v.is_finite())
            })
            .map(Var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecv(t: &mut Tape, v: &[f64]) -> Var {
        t.param_vector(v)
    }

    #[test]
    fn matvec_hand_values() {
        let mut t = Tape::new();
        let w = t
            .param(&Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let x = vecv(&mut t, &[1.0, 1.0]);
        let y = t.matvec(w, x).unwrap();
        assert_eq!(t.value(y), &[3.0, 7.0]);

        let id = t.constant(&Tensor::identity(3)).unwrap();
        let x = t.constant_vector(&[5.0, -2.0, 0.0]);
        let y = t.matvec(id, x).unwrap();
        assert_eq!(t.value(y), &[5.0, -2.0, 0.0]);
    }

    #[test]
    fn matvec_rejects_bad_shapes() {
        let mut t = Tape::new();
        let w = t.constant(&Tensor::zeros(vec![2, 3])).unwrap();
        let x = t.constant_vector(&[1.0, 2.0]);
        assert!(matches!(t.matvec(w, x), Err(Error::Dimension { .. })));
        assert!(matches!(t.matvec(x, x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn add_and_identity() {
        let mut t = Tape::new();
        let a = vecv(&mut t, &[1.0, 2.0]);
        let b = vecv(&mut t, &[3.0, 4.0]);
        let c = t.add(a, b).unwrap();
        assert_eq!(t.value(c), &[4.0, 6.0]);
        let z = t.zeros(2);
        let d = t.add(a, z).unwrap();
        assert_eq!(t.value(d), t.value(a));
        let e = t.constant_vector(&[1.0]);
        assert!(t.add(a, e).is_err());
    }

    #[test]
    fn tanh_is_odd_and_zero_at_zero() {
        let mut t = Tape::new();
        let x = t.constant_vector(&[0.0, 0.3, -1.7, 2.5]);
        let nx = t.scale(x, -1.0);
        let y = t.tanh(x);
        let ny = t.tanh(nx);
        assert_eq!(t.value(y)[0], 0.0);
        for (a, b) in t.value(y).iter().zip(t.value(ny)) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn concat_and_slice() {
        let mut t = Tape::new();
        let a = t.constant_vector(&[1.0, 2.0]);
        let b = t.constant_vector(&[3.0]);
        let e = t.constant_vector(&[]);
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.value(c), &[1.0, 2.0, 3.0]);
        let ce = t.concat(&[a, e]).unwrap();
        assert_eq!(t.value(ce), t.value(a));
        let back = t.slice(c, 2, 3).unwrap();
        assert_eq!(t.value(back), t.value(b));
        let x = t.constant_vector(&[1.0, 2.0, 3.0, 4.0]);
        let s = t.slice(x, 0, 2).unwrap();
        assert_eq!(t.value(s), &[1.0, 2.0]);
        let all = t.slice(x, 0, 4).unwrap();
        assert_eq!(t.value(all), t.value(x));
        assert!(matches!(t.slice(x, 3, 5), Err(Error::Index { .. })));
        assert!(matches!(t.slice(x, 3, 2), Err(Error::Index { .. })));
        let w = t.constant(&Tensor::zeros(vec![1, 1])).unwrap();
        assert!(t.concat(&[a, w]).is_err());
    }

    #[test]
    fn mean_values() {
        let mut t = Tape::new();
        let a = t.constant_vector(&[1.0, 2.0]);
        let b = t.constant_vector(&[3.0, 4.0]);
        let m = t.mean(&[a, b]).unwrap();
        assert_eq!(t.value(m), &[2.0, 3.0]);
        let single = t.mean(&[a]).unwrap();
        assert_eq!(t.value(single), t.value(a));
        assert!(t.mean(&[]).is_err());
    }

    #[test]
    fn mean_is_order_independent() {
        let vals = [[0.1, 1e16], [0.2, 1.0], [0.3, -1e16], [1e-17, 3.0]];
        let mut t = Tape::new();
        let vs: Vec<Var> = vals.iter().map(|v| t.constant_vector(v)).collect();
        let m1 = t.mean(&vs).unwrap();
        let rev: Vec<Var> = vs.iter().rev().copied().collect();
        let m2 = t.mean(&rev).unwrap();
        let m3 = t.mean(&[vs[2], vs[0], vs[3], vs[1]]).unwrap();
        assert_eq!(t.value(m1), t.value(m2));
        assert_eq!(t.value(m1), t.value(m3));
    }

    #[test]
    fn backward_sum_of_squares() {
        let mut t = Tape::new();
        let x = vecv(&mut t, &[1.0, 2.0]);
        let sq = t.square(x);
        let l = t.sum(sq);
        let unrelated = vecv(&mut t, &[5.0]);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x), &[2.0, 4.0]);
        assert_eq!(g.get(unrelated), &[0.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::new();
        let x = vecv(&mut t, &[1.0, 2.0]);
        assert!(matches!(t.backward(x), Err(Error::Dimension { .. })));
        let one = vecv(&mut t, &[3.0]);
        assert!(t.backward(one).is_ok());
    }

    #[test]
    fn huber_branches() {
        let mut t = Tape::new();
        let r = t.constant_vector(&[0.0, 0.5, 2.0, -2.0]);
        let h = t.huber(r, 1.0).unwrap();
        assert_eq!(t.value(h), &[0.0, 0.125, 1.5, 1.5]);
        assert!(t.huber(r, 0.0).is_err());
    }

    #[test]
    fn non_finite_detection_is_post_hoc() {
        let mut t = Tape::new();
        let x = t.constant_vector(&[1.0, f64::INFINITY]);
        let _ = t.scale(x, 0.0);
        assert_eq!(t.first_non_finite(), Some(x));
    }
}
