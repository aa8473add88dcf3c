//! Reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! Every operation records its inputs on a tape; [`Tape::backward`] walks the
//! tape in reverse and returns gradients for the parameters that were read.

use ndarray::{s, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{Mat, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Smallest probability passed to a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Softmax(Var),
    LayerNorm(Var, Vec<f64>),
    Cols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<usize>),
    Window(Var, isize, usize),
    SumAll(Var),
    RowSum(Var),
    Reshape(Var),
}

struct Node {
    value: Option<Mat>,
    op: Op,
    grad: bool,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

/// Gradients of the parameters read on a tape, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<Option<Mat>>);

impl Grads {
    pub fn zeros(n: usize) -> Self {
        Grads(vec![None; n])
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.0.get(id).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, other: Grads) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), None);
        }
        for (a, b) in self.0.iter_mut().zip(other.0) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => *a += &b,
                (None, Some(b)) => *a = Some(b),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.0.iter_mut().flatten() {
            g.mapv_inplace(|x| x * k);
        }
    }
}

impl<'p> Tape<'p> {
    /// A tape without dropout.
    pub fn new(store: &'p ParamStore) -> Self {
        Tape { store, nodes: Vec::new(), dropout: None }
    }

    /// A tape whose [`Tape::dropout`] zeroes entries with probability `rate`.
    pub fn training(store: &'p ParamStore, rate: f64, rng: ChaCha8Rng) -> Self {
        Tape { store, nodes: Vec::new(), dropout: (rate > 0.0).then_some((rate, rng)) }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        let n = &self.nodes[v.0];
        match (&n.value, &n.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    fn push(&mut self, value: Mat, op: Op, grad: bool) -> Var {
        self.nodes.push(Node { value: Some(value), op, grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Const, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id), grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMulT(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), g)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        let g = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), g)
    }

    /// Multiplies every row of `a` by a `1 × n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) * self.value(row);
        let g = self.needs(a) || self.needs(row);
        self.push(v, Op::MulRow(a, row), g)
    }

    /// Multiplies row `i` of `a` by entry `i` of an `L × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.value(a) * self.value(col);
        let g = self.needs(a) || self.needs(col);
        self.push(v, Op::MulCol(a, col), g)
    }

    /// `scale · a + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).mapv(|x| scale * x + shift);
        let g = self.needs(a);
        self.push(v, Op::Affine(a, scale), g)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let g = self.needs(a);
        self.push(v, Op::Relu(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        let g = self.needs(a);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        let g = self.needs(a);
        self.push(v, Op::Sigmoid(a), g)
    }

    /// Natural log of `max(a, LOG_FLOOR)`.
    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(LOG_FLOOR).ln());
        let g = self.needs(a);
        self.push(v, Op::Ln(a), g)
    }

    /// Row-wise softmax. Entries where `allowed` is false get probability 0;
    /// a row with nothing allowed is all zeros.
    pub fn softmax(&mut self, a: Var, allowed: Option<&ndarray::Array2<bool>>) -> Var {
        let x = self.value(a);
        let mut out = Mat::zeros(x.dim());
        for (i, row) in x.outer_iter().enumerate() {
            let ok = |j: usize| allowed.is_none_or(|m| m[[i, j]]);
            let max = row.iter().enumerate().filter(|(j, _)| ok(*j)).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if ok(j) {
                    let e = (v - max).exp();
                    out[[i, j]] = e;
                    sum += e;
                }
            }
            out.row_mut(i).mapv_inplace(|e| e / sum);
        }
        let g = self.needs(a);
        self.push(out, Op::Softmax(a), g)
    }

    /// Normalizes each row to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let n = x.ncols() as f64;
        let mut out = x.clone();
        let mut inv = Vec::with_capacity(x.nrows());
        for mut row in out.outer_iter_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let r = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * r);
            inv.push(r);
        }
        let g = self.needs(a);
        self.push(out, Op::LayerNorm(a, inv), g)
    }

    /// Columns `start..end`.
    pub fn cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let g = self.needs(a);
        self.push(v, Op::Cols(a, start), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let g = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        let g = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::ConcatRows(parts.to_vec()), g)
    }

    /// Rows `ids` of `a`, in order; repeats allowed.
    pub fn gather(&mut self, a: Var, ids: &[usize]) -> Var {
        let x = self.value(a);
        let v = x.select(Axis(0), ids);
        let g = self.needs(a);
        self.push(v, Op::Gather(a, ids.to_vec()), g)
    }

    /// Row `i` of the result concatenates rows `i + offset .. i + offset + k`
    /// of `a`; rows outside `a` read as zeros.
    pub fn window(&mut self, a: Var, offset: isize, k: usize) -> Var {
        let x = self.value(a);
        let (l, d) = x.dim();
        let mut out = Mat::zeros((l, k * d));
        for i in 0..l {
            for o in 0..k {
                let src = i as isize + offset + o as isize;
                if src >= 0 && (src as usize) < l {
                    out.slice_mut(s![i, o * d..(o + 1) * d]).assign(&x.row(src as usize));
                }
            }
        }
        let g = self.needs(a);
        self.push(out, Op::Window(a, offset, k), g)
    }

    /// Sum of all entries as a `1 × 1` matrix.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        let g = self.needs(a);
        self.push(v, Op::SumAll(a), g)
    }

    /// Row sums as an `L × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let g = self.needs(a);
        self.push(v, Op::RowSum(a), g)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        let flat: Vec<f64> = x.iter().copied().collect();
        let v = Mat::from_shape_vec((rows, cols), flat).expect("reshape keeps the element count");
        let g = self.needs(a);
        self.push(v, Op::Reshape(a), g)
    }

    /// Inverted dropout; identity on tapes built with [`Tape::new`].
    pub fn dropout(&mut self, a: Var) -> Var {
        let (r, c) = self.value(a).dim();
        let Some((rate, rng)) = self.dropout.as_mut() else { return a };
        let rate = *rate;
        let keep = 1.0 / (1.0 - rate);
        let mask = Mat::from_shape_fn((r, c), |_| if rng.gen::<f64>() < rate { 0.0 } else { keep });
        let m = self.constant(mask);
        self.mul(a, m)
    }

    /// Gradients of the scalar `loss` with respect to every parameter read.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.shape(loss), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Grads::zeros(self.store.len());
        grads[loss.0] = Some(Mat::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.grad {
                continue;
            }
            let mut acc = |v: Var, delta: Mat| {
                if !self.nodes[v.0].grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(x) => *x += &delta,
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Const => {}
                Op::Param(id) => match &mut out.0[*id] {
                    Some(x) => *x += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        acc(*a, g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        acc(*b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.needs(*a) {
                        acc(*a, g.dot(self.value(*b)));
                    }
                    if self.needs(*b) {
                        acc(*b, g.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        acc(*b, g.clone());
                    }
                    acc(*a, g);
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        acc(*b, -&g);
                    }
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        acc(*a, &g * self.value(*b));
                    }
                    if self.needs(*b) {
                        acc(*b, &g * self.value(*a));
                    }
                }
                Op::AddRow(a, r) => {
                    if self.needs(*r) {
                        acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    acc(*a, g);
                }
                Op::MulRow(a, r) => {
                    if self.needs(*r) {
                        acc(*r, (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*a) {
                        acc(*a, &g * self.value(*r));
                    }
                }
                Op::MulCol(a, c) => {
                    if self.needs(*c) {
                        acc(*c, (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1)));
                    }
                    if self.needs(*a) {
                        acc(*a, &g * self.value(*c));
                    }
                }
                Op::Affine(a, k) => acc(*a, g * *k),
                Op::Relu(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |gi, &x| {
                        if x <= 0.0 {
                            *gi = 0.0
                        }
                    });
                    acc(*a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(Var(i)), |gi, &y| *gi *= 1.0 - y * y);
                    acc(*a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(Var(i)), |gi, &y| *gi *= y * (1.0 - y));
                    acc(*a, d);
                }
                Op::Ln(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |gi, &x| *gi /= x.max(LOG_FLOOR));
                    acc(*a, d);
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(i));
                    let dot = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*a, y * &(g - &dot));
                }
                Op::LayerNorm(a, inv) => {
                    let y = self.value(Var(i));
                    let n = y.ncols() as f64;
                    let mut d = Mat::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let sg = gr.sum();
                        let sgy = gr.dot(&yr);
                        let k = inv[r] / n;
                        for c in 0..y.ncols() {
                            d[[r, c]] = k * (n * gr[c] - sg - yr[c] * sgy);
                        }
                    }
                    acc(*a, d);
                }
                Op::Cols(a, start) => {
                    let mut d = Mat::zeros(self.shape(*a));
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(*a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if self.needs(*p) {
                            acc(*p, g.slice(s![.., at..at + w]).to_owned());
                        }
                        at += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        if self.needs(*p) {
                            acc(*p, g.slice(s![at..at + h, ..]).to_owned());
                        }
                        at += h;
                    }
                }
                Op::Gather(a, ids) => {
                    let mut d = Mat::zeros(self.shape(*a));
                    for (r, &id) in ids.iter().enumerate() {
                        let mut row = d.row_mut(id);
                        row += &g.row(r);
                    }
                    acc(*a, d);
                }
                Op::Window(a, offset, k) => {
                    let (l, dm) = self.shape(*a);
                    let mut d = Mat::zeros((l, dm));
                    for r in 0..l {
                        for o in 0..*k {
                            let src = r as isize + offset + o as isize;
                            if src >= 0 && (src as usize) < l {
                                let mut row = d.row_mut(src as usize);
                                row += &g.slice(s![r, o * dm..(o + 1) * dm]);
                            }
                        }
                    }
                    acc(*a, d);
                }
                Op::SumAll(a) => {
                    let v = g[[0, 0]];
                    acc(*a, Mat::from_elem(self.shape(*a), v));
                }
                Op::Reshape(a) => {
                    let flat: Vec<f64> = g.iter().copied().collect();
                    acc(*a, Mat::from_shape_vec(self.shape(*a), flat).expect("same element count"));
                }
                Op::RowSum(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, Mat::from_shape_fn((r, c), |(i, _)| g[[i, 0]]));
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use ndarray::array;

    #[test]
    fn matmul_gradient_by_hand() {
        let mut store = ParamStore::new();
        let a = store.insert("a", array![[1.0, 2.0], [3.0, 4.0]]);
        let b = store.insert("b", array![[5.0], [6.0]]);
        let mut t = Tape::new(&store);
        let (va, vb) = (t.param(a), t.param(b));
        let p = t.matmul(va, vb);
        let l = t.sum_all(p);
        assert_eq!(t.value(l)[[0, 0]], 17.0 + 39.0);
        let g = t.backward(l);
        assert_eq!(g.get(a).unwrap(), &array![[5.0, 6.0], [5.0, 6.0]]);
        assert_eq!(g.get(b).unwrap(), &array![[4.0], [6.0]]);
    }

    #[test]
    fn masked_softmax_rows() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let x = t.constant(array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]);
        let mask = array![[true, false, true], [false, false, false]];
        let y = t.softmax(x, Some(&mask));
        let y = t.value(y);
        assert_eq!(y[[0, 1]], 0.0);
        assert!((y.row(0).sum() - 1.0).abs() < 1e-15);
        assert_eq!(y.row(1).sum(), 0.0);
    }

    #[test]
    fn gather_accumulates_repeats() {
        let mut store = ParamStore::new();
        let e = store.add("e", 3, 2, Init::Ones, 0);
        let mut t = Tape::new(&store);
        let v = t.param(e);
        let rows = t.gather(v, &[2, 0, 2]);
        let l = t.sum_all(rows);
        let g = t.backward(l);
        assert_eq!(g.get(e).unwrap(), &array![[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]);
    }

    #[test]
    fn window_pads_with_zeros() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let x = t.constant(array![[1.0], [2.0], [3.0]]);
        let w = t.window(x, -1, 3);
        assert_eq!(t.value(w), &array![[0.0, 1.0, 2.0], [1.0, 2.0, 3.0], [2.0, 3.0, 0.0]]);
    }
}
