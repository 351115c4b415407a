//! Define-by-run computation tape with reverse-mode accumulation.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamSet};
use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Scalar, Tensor};
use crate::error::{Error, Result};

/// Probabilities fed to a logarithm are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Matmul(Var, Var),
    AddRow(Var, Var),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Embedding(Var, Vec<usize>),
    Dropout(Var, Vec<F>),
    Softmax(Var),
    GatherRows(Var, Vec<Option<usize>>),
    SelectRows(Var, Var, Vec<bool>),
    Sum(Var),
    Mean(Var),
    Bce(Var, Vec<F>),
    Nll(Var, Vec<usize>, Vec<F>),
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Records operations for one forward pass. In inference mode dropout is the
/// identity; in training mode its masks come from the tape's seeded stream.
#[derive(Debug)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    training: bool,
    rng: ChaCha8Rng,
    params: HashMap<ParamId, Var>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn same_shape<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn matrix_dims<F: Scalar>(t: &Tensor<F>, op: &str) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::shape(format!("{op}: expected a matrix, got {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new(training: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: HashMap::new(),
        }
    }

    pub fn inference() -> Self {
        Self::new(false, 0)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Places a parameter on the tape; repeated calls return the same node.
    pub fn param(&mut self, set: &ParamSet<F>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(set.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x - y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| x * s).collect()).expect("same shape");
        self.push(out, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a), "matmul")?;
        let (k2, n) = matrix_dims(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::shape(format!("matmul: {m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![F::zero(); m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Matmul(a, b)))
    }

    /// Adds a bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let cols = self.value(a).cols();
        if self.value(bias).len() != cols {
            return Err(Error::shape(format!(
                "add_row: bias of {} values for {cols} columns",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias).data().to_vec();
        let t = self.value(a);
        let data = t.data().chunks(cols).flat_map(|row| row.iter().zip(&b).map(|(&x, &y)| x + y)).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::AddRow(a, bias)))
    }

    /// Concatenates along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let rows = self.value(*first).rows();
        let lead: Vec<usize> = {
            let s = self.value(*first).shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut width = 0;
        for &p in parts {
            let t = self.value(p);
            let s = t.shape();
            if s[..s.len().saturating_sub(1)] != lead[..] {
                return Err(Error::shape(format!("concat: leading dims {:?} vs {lead:?}", s)));
            }
            width += t.cols();
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let mut shape = lead;
        shape.push(width);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(parts.to_vec())))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat_rows of nothing"))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape(format!("concat_rows: {} vs {cols} columns", t.cols())));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::matrix(rows, cols, data)?, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        if start >= end || end > cols {
            return Err(Error::shape(format!("slice_cols {start}..{end} of {cols}")));
        }
        let data = (0..t.rows()).flat_map(|r| t.row_slice(r)[start..end].iter().copied()).collect();
        let out = Tensor::matrix(t.rows(), end - start, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    fn map(&mut self, a: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        self.push(out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (vocab, dim) = matrix_dims(t, "embedding")?;
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index(format!("token id {id} outside vocabulary of {vocab}")));
            }
            data.extend_from_slice(t.row_slice(id));
        }
        Ok(self.push(Tensor::matrix(ids.len(), dim, data)?, Op::Embedding(table, ids.to_vec())))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - p)`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if !self.training || p == 0.0 {
            return Ok(a);
        }
        let keep = F::of(1.0 / (1.0 - p));
        let n = self.value(a).len();
        let mask: Vec<F> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < p { F::zero() } else { keep })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Dropout(a, mask)))
    }

    /// Row-wise softmax over the last axis, computed after subtracting the row max.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let cols = t.cols();
        let mut data = Vec::with_capacity(t.len());
        for row in t.data().chunks(cols) {
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let start = data.len();
            data.extend(row.iter().map(|&x| (x - max).exp()));
            let total: F = data[start..].iter().copied().sum();
            for v in &mut data[start..] {
                *v = *v / total;
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Softmax(a))
    }

    /// Output row `i` is row `idx[i]` of `a`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, idx: &[Option<usize>]) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        let rows = t.rows();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            match i {
                Some(i) if i < rows => data.extend_from_slice(t.row_slice(i)),
                Some(i) => return Err(Error::Index(format!("row {i} of {rows}"))),
                None => data.extend(std::iter::repeat_n(F::zero(), cols)),
            }
        }
        Ok(self.push(Tensor::matrix(idx.len(), cols, data)?, Op::GatherRows(a, idx.to_vec())))
    }

    /// Row `i` comes from `new` where `take_new[i]`, else from `old`.
    pub fn select_rows(&mut self, new: Var, old: Var, take_new: &[bool]) -> Result<Var> {
        same_shape(self.value(new), self.value(old), "select_rows")?;
        let rows = self.value(new).rows();
        if take_new.len() != rows {
            return Err(Error::shape(format!("select_rows: mask of {} for {rows} rows", take_new.len())));
        }
        let cols = self.value(new).cols();
        let mut data = Vec::with_capacity(rows * cols);
        for (r, &pick) in take_new.iter().enumerate() {
            let src = if pick { new } else { old };
            data.extend_from_slice(self.value(src).row_slice(r));
        }
        let shape = self.value(new).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::SelectRows(new, old, take_new.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: F = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: F = t.data().iter().copied().sum::<F>() / F::of(t.len().max(1) as f64);
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 targets.
    pub fn bce(&mut self, p: Var, targets: &[F]) -> Result<Var> {
        let t = self.value(p);
        if t.len() != targets.len() || targets.is_empty() {
            return Err(Error::shape(format!("bce: {} probabilities, {} targets", t.len(), targets.len())));
        }
        let loss = bce_value(t.data(), targets);
        Ok(self.push(Tensor::scalar(loss), Op::Bce(p, targets.to_vec())))
    }

    /// `-Σ weights[i] · ln probs[i, targets[i]]` over the rows of a probability matrix.
    pub fn nll(&mut self, probs: Var, targets: &[usize], weights: &[F]) -> Result<Var> {
        let t = self.value(probs);
        let (rows, cols) = matrix_dims(t, "nll")?;
        if targets.len() != rows || weights.len() != rows {
            return Err(Error::shape(format!(
                "nll: {rows} rows, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        let lo = F::of(PROB_CLAMP);
        let mut loss = F::zero();
        for (r, (&y, &w)) in targets.iter().zip(weights).enumerate() {
            if y >= cols {
                return Err(Error::Index(format!("target {y} outside {cols} classes")));
            }
            if w != F::zero() {
                loss -= w * t.at(r, y).max(lo).ln();
            }
        }
        Ok(self.push(Tensor::scalar(loss), Op::Nll(probs, targets.to_vec(), weights.to_vec())))
    }

    /// Reverse-mode pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                let len = self.nodes[v.0].value.len();
                grads[v.0].get_or_insert_with(|| vec![F::zero(); len])
            }};
        }
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                add_into(acc!(*a), g);
                add_into(acc!(*b), g);
            }
            Op::Sub(a, b) => {
                add_into(acc!(*a), g);
                acc!(*b).iter_mut().zip(g).for_each(|(d, &x)| *d -= x);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc!(*a).iter_mut().zip(g.iter().zip(bv)).for_each(|(d, (&x, &y))| *d += x * y);
                acc!(*b).iter_mut().zip(g.iter().zip(av)).for_each(|(d, (&x, &y))| *d += x * y);
            }
            Op::Scale(a, s) => acc!(*a).iter_mut().zip(g).for_each(|(d, &x)| *d += x * *s),
            Op::Matmul(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                gemm_nt_acc(g, self.value(*b).data(), acc!(*a), m, k, n);
                gemm_tn_acc(self.value(*a).data(), g, acc!(*b), m, k, n);
            }
            Op::AddRow(a, bias) => {
                add_into(acc!(*a), g);
                let cols = out.cols();
                let db = acc!(*bias);
                for row in g.chunks(cols) {
                    add_into(db, row);
                }
            }
            Op::Concat(parts) => {
                let rows = out.rows();
                let width = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let d = acc!(p);
                    for r in 0..rows {
                        add_into(&mut d[r * w..(r + 1) * w], &g[r * width + offset..r * width + offset + w]);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    add_into(acc!(p), &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let w = out.cols();
                let cols = self.value(*a).cols();
                let d = acc!(*a);
                for r in 0..out.rows() {
                    add_into(&mut d[r * cols + start..r * cols + start + w], &g[r * w..(r + 1) * w]);
                }
            }
            Op::Tanh(a) => acc!(*a)
                .iter_mut()
                .zip(g.iter().zip(out.data()))
                .for_each(|(d, (&x, &y))| *d += x * (F::one() - y * y)),
            Op::Sigmoid(a) => acc!(*a)
                .iter_mut()
                .zip(g.iter().zip(out.data()))
                .for_each(|(d, (&x, &y))| *d += x * y * (F::one() - y)),
            Op::Embedding(table, ids) => {
                let dim = out.cols();
                let d = acc!(*table);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut d[id * dim..(id + 1) * dim], &g[r * dim..(r + 1) * dim]);
                }
            }
            Op::Dropout(a, mask) => acc!(*a)
                .iter_mut()
                .zip(g.iter().zip(mask))
                .for_each(|(d, (&x, &m))| *d += x * m),
            Op::Softmax(a) => {
                let cols = out.cols();
                let d = acc!(*a);
                for (r, (gy, y)) in g.chunks(cols).zip(out.data().chunks(cols)).enumerate() {
                    let dot: F = gy.iter().zip(y).map(|(&u, &v)| u * v).sum();
                    for c in 0..cols {
                        d[r * cols + c] += y[c] * (gy[c] - dot);
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                let cols = out.cols();
                let d = acc!(*a);
                for (r, i) in idx.iter().enumerate() {
                    if let Some(i) = i {
                        add_into(&mut d[i * cols..(i + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::SelectRows(new, old, take_new) => {
                let cols = out.cols();
                for (r, &pick) in take_new.iter().enumerate() {
                    let target = if pick { *new } else { *old };
                    add_into(&mut acc!(target)[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                }
            }
            Op::Sum(a) => acc!(*a).iter_mut().for_each(|d| *d += g[0]),
            Op::Mean(a) => {
                let n = F::of(self.value(*a).len() as f64);
                acc!(*a).iter_mut().for_each(|d| *d += g[0] / n);
            }
            Op::Bce(p, targets) => {
                let probs = self.value(*p).data();
                let n = F::of(targets.len() as f64);
                let lo = F::of(PROB_CLAMP);
                let hi = F::one() - lo;
                let d = acc!(*p);
                for ((d, &prob), &t) in d.iter_mut().zip(probs).zip(targets) {
                    if prob > lo && prob < hi {
                        *d -= g[0] * (t / prob - (F::one() - t) / (F::one() - prob)) / n;
                    }
                }
            }
            Op::Nll(probs, targets, weights) => {
                let p = self.value(*probs);
                let cols = p.cols();
                let lo = F::of(PROB_CLAMP);
                let d = acc!(*probs);
                for (r, (&y, &w)) in targets.iter().zip(weights).enumerate() {
                    let prob = p.at(r, y);
                    if w != F::zero() && prob > lo {
                        d[r * cols + y] -= g[0] * w / prob;
                    }
                }
            }
        }
    }

    /// Gradient of every parameter in `set`; parameters absent from the tape
    /// get zeros.
    pub fn param_grads(&self, grads: &Gradients<F>, set: &ParamSet<F>) -> Vec<Tensor<F>> {
        set.ids()
            .map(|id| {
                let shape = set.value(id).shape();
                match self.params.get(&id).and_then(|&v| grads.get(v)) {
                    Some(g) => Tensor::new(shape.to_vec(), g.to_vec()).expect("grad matches parameter shape"),
                    None => Tensor::zeros(shape),
                }
            })
            .collect()
    }
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

/// Clamped mean binary cross-entropy.
pub fn bce_value<F: Scalar>(probs: &[F], targets: &[F]) -> F {
    let lo = F::of(PROB_CLAMP);
    let hi = F::one() - lo;
    let n = F::of(probs.len().max(1) as f64);
    let total: F = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.max(lo).min(hi);
            t * p.ln() + (F::one() - t) * (F::one() - p).ln()
        })
        .sum();
    -total / n
}
