use std::collections::HashMap;

use crate::{ParamGrads, ParamId, ParamStore, Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    MaxConst(Var, f64),
    MaskedSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations in evaluation order so that [`Tape::backward`]
/// can replay them in reverse.
///
/// A tape is single-threaded. Build one per forward pass; independent tapes
/// can run on different threads.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Result of [`Tape::backward`]: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let shape = self.shapes[var.0].clone();
                let n = shape.iter().product();
                Tensor::new(shape, vec![0.0; n]).expect("shape from tape")
            }
        }
    }

    /// Gradients for every parameter bound on the tape.
    pub fn params(&self) -> ParamGrads {
        let mut out = ParamGrads::new();
        for &(id, var) in &self.params {
            out.insert(id, self.wrt(var));
        }
        out
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2(op)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Differentiable input not tied to a parameter store.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// Binds every parameter in `store`, so that each one receives a
    /// (possibly zero) gradient.
    pub fn bind_all(&mut self, store: &ParamStore) {
        for id in store.ids() {
            self.param(store, id);
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds the `[1, n]` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a, "add_row")?;
        let (br, bn) = self.dims(bias, "add_row")?;
        if br != 1 || bn != n {
            return Err(mismatch("add_row", self.value(a), self.value(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..m {
            for (o, bv) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(self.value(b), "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Elementwise `max(a, c)`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x.max(c));
        let rg = self.rg(a);
        self.push(out, Op::MaxConst(a, c), rg)
    }

    /// Row-wise softmax over unmasked entries.
    ///
    /// `keep` has one flag per element; `false` acts as an additive `-inf`
    /// and yields an output weight of exactly zero. A row with every entry
    /// masked is an error.
    pub fn masked_softmax(&mut self, a: Var, keep: &[bool]) -> Result<Var> {
        let (m, n) = self.dims(a, "masked_softmax")?;
        if keep.len() != m * n {
            return Err(TensorError::ShapeMismatch { op: "masked_softmax", lhs: vec![m, n], rhs: vec![keep.len()] });
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mask = &keep[i * n..(i + 1) * n];
            let max = row.iter().zip(mask).filter(|(_, &k)| k).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::FullyMaskedRow { row: i });
            }
            let o = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for j in 0..n {
                if mask[j] {
                    o[j] = (row[j] - max).exp();
                    total += o[j];
                }
            }
            for v in o.iter_mut() {
                *v /= total;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MaskedSoftmax(a), rg))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::EmptyInput("concat_cols"))?;
        let (m, _) = self.dims(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p, "concat_cols")?;
            if r != m {
                return Err(mismatch("concat_cols", self.value(first), self.value(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(m, total, out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::EmptyInput("concat_rows"))?;
        let (_, n) = self.dims(first, "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p, "concat_rows")?;
            if c != n {
                return Err(mismatch("concat_rows", self.value(first), self.value(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, n, out)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// `out[k] = a[index[k]]`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(a, "gather_rows")?;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            if i >= m {
                return Err(TensorError::RowIndex { op: "gather_rows", index: i, rows: m });
            }
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(index.len(), n, out)?, Op::GatherRows(a, index.to_vec()), rg))
    }

    /// `out[index[k]] += a[k]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], rows: usize) -> Result<Var> {
        let (m, n) = self.dims(a, "scatter_add_rows")?;
        if index.len() != m {
            return Err(TensorError::ShapeMismatch { op: "scatter_add_rows", lhs: vec![m, n], rhs: vec![index.len()] });
        }
        let src = self.value(a).data();
        let mut out = vec![0.0; rows * n];
        for (k, &i) in index.iter().enumerate() {
            if i >= rows {
                return Err(TensorError::RowIndex { op: "scatter_add_rows", index: i, rows });
            }
            for (o, s) in out[i * n..(i + 1) * n].iter_mut().zip(&src[k * n..(k + 1) * n]) {
                *o += s;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(rows, n, out)?, Op::ScatterAddRows(a, index.to_vec()), rg))
    }

    /// Sum of all entries as a `[1, 1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(shape.to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut params: Vec<(ParamId, Var)> = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        params.sort_by_key(|p| p.0);
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, params, shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect() })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul(&self.value(*b).transpose()?)?);
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).transpose()?.matmul(g)?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, bias) => {
                acc(*a, g.clone());
                if self.rg(*bias) {
                    let (m, n) = g.dims2("add_row")?;
                    let mut col = vec![0.0; n];
                    for i in 0..m {
                        for (c, v) in col.iter_mut().zip(g.row_slice(i)) {
                            *c += v;
                        }
                    }
                    acc(*bias, Tensor::row(col));
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_with(self.value(*b), "mul", |x, y| x * y)?);
                }
                if self.rg(*b) {
                    acc(*b, g.zip_with(self.value(*a), "mul", |x, y| x * y)?);
                }
            }
            Op::Scale(a, c) => acc(*a, g.map(|v| c * v)),
            Op::Exp(a) => acc(*a, g.zip_with(out, "exp", |x, y| x * y)?),
            Op::Log(a) => acc(*a, g.zip_with(self.value(*a), "log", |x, y| x / y)?),
            Op::Sigmoid(a) => acc(*a, g.zip_with(out, "sigmoid", |x, y| x * y * (1.0 - y))?),
            Op::Tanh(a) => acc(*a, g.zip_with(out, "tanh", |x, y| x * (1.0 - y * y))?),
            Op::Relu(a) => acc(*a, g.zip_with(self.value(*a), "relu", |x, y| if y > 0.0 { x } else { 0.0 })?),
            Op::MaxConst(a, c) => acc(*a, g.zip_with(self.value(*a), "max_const", |x, y| if y > *c { x } else { 0.0 })?),
            Op::MaskedSoftmax(a) => {
                let (m, n) = out.dims2("masked_softmax")?;
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let y = out.row_slice(i);
                    let gy = g.row_slice(i);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        d[i * n + j] = y[j] * (gy[j] - dot);
                    }
                }
                acc(*a, Tensor::matrix(m, n, d)?);
            }
            Op::ConcatCols(parts) => {
                let (m, total) = g.dims2("concat_cols")?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for i in 0..m {
                            d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        acc(p, Tensor::matrix(m, w, d)?);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.rg(p) {
                        let d = g.data()[offset * n..(offset + r) * n].to_vec();
                        acc(p, Tensor::matrix(r, n, d)?);
                    }
                    offset += r;
                }
            }
            Op::GatherRows(a, index) => {
                let (m, n) = self.dims(*a, "gather_rows")?;
                let mut d = vec![0.0; m * n];
                for (k, &i) in index.iter().enumerate() {
                    for (o, v) in d[i * n..(i + 1) * n].iter_mut().zip(g.row_slice(k)) {
                        *o += v;
                    }
                }
                acc(*a, Tensor::matrix(m, n, d)?);
            }
            Op::ScatterAddRows(a, index) => {
                let n = g.cols();
                let mut d = Vec::with_capacity(index.len() * n);
                for &i in index {
                    d.extend_from_slice(g.row_slice(i));
                }
                acc(*a, Tensor::matrix(index.len(), n, d)?);
            }
            Op::Sum(a) => {
                let s = g.item();
                acc(*a, self.value(*a).map(|_| s));
            }
            Op::Mean(a) => {
                let v = self.value(*a);
                let s = g.item() / v.len().max(1) as f64;
                acc(*a, v.map(|_| s));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let i = tape.constant(Tensor::identity(2));
        let c = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(a);
        assert_eq!(tape.value(s).item(), 0.5);
    }

    #[test]
    fn masked_softmax_symmetric_with_mask() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(vec![1.0, 1.0, 7.0]));
        let s = tape.masked_softmax(a, &[true, true, false]).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn masked_softmax_rejects_dead_row() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(tape.masked_softmax(a, &[false, false]), Err(TensorError::FullyMaskedRow { row: 0 })));
    }

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 2));
        assert!(tape.add(a, b).is_err());
        assert!(tape.matmul(a, a).is_err());
        let bias = tape.constant(Tensor::zeros(1, 2));
        assert!(tape.add_row(a, bias).is_err());
    }

    #[test]
    fn param_bound_once_and_accumulates() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::scalar(2.0)).unwrap();
        let mut tape = Tape::new();
        let w1 = tape.param(&store, id);
        let w2 = tape.param(&store, id);
        assert_eq!(w1, w2);
        let y = tape.mul(w1, w2).unwrap();
        let g = tape.backward(y).unwrap().params();
        assert_eq!(g.get(id).unwrap().item(), 4.0);
    }

    #[test]
    fn unused_params_get_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.insert("used", Tensor::scalar(2.0)).unwrap();
        let unused = store.insert("unused", Tensor::zeros(2, 2)).unwrap();
        let mut tape = Tape::new();
        tape.bind_all(&store);
        let w = tape.param(&store, used);
        let y = tape.sum(w);
        let g = tape.backward(y).unwrap().params();
        assert_eq!(g.get(unused).unwrap(), &Tensor::zeros(2, 2));
        assert_eq!(g.get(used).unwrap().item(), 1.0);
    }

    #[test]
    fn scatter_and_gather_are_adjoint() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let g = tape.gather_rows(a, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(g).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = tape.scatter_add_rows(g, &[1, 1, 0], 2).unwrap();
        assert_eq!(tape.value(s).data(), &[5.0, 6.0, 6.0, 8.0]);
        assert!(tape.gather_rows(a, &[3]).is_err());
    }
}
