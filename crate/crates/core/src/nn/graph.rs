//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Values are computed eagerly; [`Graph::backward`] walks the record in
//! reverse to produce gradients for every node and every parameter that
//! took part in the computation. A graph lives for one forward pass.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGrads, ParamId, ParamStore};

pub type Tensor = Array2<f64>;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    MulConst(Var, Tensor),
    AddConst(Var),
    Scale(Var, f64),
    Shift(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    LogSigmoid(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Transpose(Var),
    Sum(Var),
    SumCols(Var),
    LogSoftmax(Var),
    Softmax(Var),
    Pick(Var, Vec<usize>),
    LstmCell(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub struct Graph<'s> {
    nodes: Vec<Node>,
    store: &'s ParamStore,
    param_vars: HashMap<ParamId, Var>,
    rng: Option<ChaCha8Rng>,
}

impl<'s> Graph<'s> {
    /// Inference graph: stochastic regularizers are disabled.
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            nodes: Vec::new(),
            store,
            param_vars: HashMap::new(),
            rng: None,
        }
    }

    /// Training graph; all randomness is drawn from a generator seeded with `seed`.
    pub fn training(store: &'s ParamStore, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            store,
            param_vars: HashMap::new(),
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        self.rng.as_mut()
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.dim(), (1, 1), "scalar() on a {:?} tensor", t.dim());
        t[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Tensor::zeros((rows, cols)))
    }

    /// The parameter as a graph node. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(self.store.value(id).clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// `a` (n×m) plus the row vector `b` (1×m) on every row.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b).0, 1);
        assert_eq!(self.shape(a).1, self.shape(b).1, "add_row width mismatch");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// Scales each row of `a` (n×m) by the matching entry of the column `b` (n×1).
    pub fn mul_col(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b), (self.shape(a).0, 1), "mul_col shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MulCol(a, b))
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        assert_eq!(self.shape(a), c.dim(), "mul_const shape mismatch");
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        assert_eq!(self.shape(a), c.dim(), "add_const shape mismatch");
        let v = self.value(a) + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn shift(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, Op::Shift(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(log_sigmoid);
        self.push(v, Op::LogSigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        self.slice_rows(a, i, 1)
    }

    /// Rows of `a` in the order given by `rows` (repeats allowed).
    pub fn gather(&mut self, a: Var, rows: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), rows);
        self.push(v, Op::Gather(a, rows.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    /// Sum of all entries, as a 1×1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Per-row sums, n×1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        self.push(v, Op::Softmax(a))
    }

    /// `out[i] = a[i, cols[i]]`, n×1.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Var {
        let av = self.value(a);
        assert_eq!(av.nrows(), cols.len(), "pick needs one column per row");
        let v = Tensor::from_shape_fn((cols.len(), 1), |(i, _)| av[[i, cols[i]]]);
        self.push(v, Op::Pick(a, cols.to_vec()))
    }

    /// One LSTM step. `gates` (n×4h) holds input, forget, cell and output
    /// pre-activations in that order; returns `[h, c]` as n×2h.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let z = self.value(gates);
        let c0 = self.value(c_prev);
        let h = c0.ncols();
        assert_eq!(z.dim(), (c0.nrows(), 4 * h), "lstm_cell shape mismatch");
        let mut out = Tensor::zeros((c0.nrows(), 2 * h));
        for r in 0..c0.nrows() {
            for k in 0..h {
                let i = sigmoid(z[[r, k]]);
                let f = sigmoid(z[[r, h + k]]);
                let g = z[[r, 2 * h + k]].tanh();
                let o = sigmoid(z[[r, 3 * h + k]]);
                let c = f * c0[[r, k]] + i * g;
                out[[r, k]] = o * c.tanh();
                out[[r, h + k]] = c;
            }
        }
        self.push(out, Op::LstmCell(gates, c_prev))
    }

    /// Inverted dropout with a fresh mask; identity outside training.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 || !self.is_training() {
            return a;
        }
        let (r, c) = self.shape(a);
        let mask = self.dropout_mask(r, c, p);
        self.mul_const(a, mask)
    }

    /// A scaled Bernoulli keep-mask; all ones outside training.
    pub fn dropout_mask(&mut self, rows: usize, cols: usize, p: f64) -> Tensor {
        match self.rng.as_mut() {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 - p;
                Tensor::from_shape_simple_fn((rows, cols), || {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            }
            _ => Tensor::ones((rows, cols)),
        }
    }

    /// Gradients of `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.value(loss).dim()));
        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    /// Adds the parameter gradients of `loss` into `acc`.
    pub fn backward_into(&self, loss: Var, acc: &mut ParamGrads) {
        let grads = self.backward(loss);
        for (&id, &v) in &self.param_vars {
            if let Some(g) = &grads.grads[v.0] {
                acc.add(id, g);
            }
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, g.dot(&val(*b).t()));
                acc(grads, *b, val(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddRow(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * val(*b));
                acc(grads, *b, g * val(*a));
            }
            Op::MulCol(a, b) => {
                acc(grads, *a, g * val(*b));
                acc(grads, *b, (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::MulConst(a, c) => acc(grads, *a, g * c),
            Op::AddConst(a) | Op::Shift(a) => acc(grads, *a, g.clone()),
            Op::Scale(a, k) => acc(grads, *a, g * *k),
            Op::Sigmoid(a) => acc(grads, *a, g * &out.mapv(|y| y * (1.0 - y))),
            Op::Tanh(a) => acc(grads, *a, g * &out.mapv(|y| 1.0 - y * y)),
            Op::Relu(a) => acc(grads, *a, g * &val(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 })),
            Op::Softplus(a) => acc(grads, *a, g * &val(*a).mapv(sigmoid)),
            Op::LogSigmoid(a) => acc(grads, *a, g * &val(*a).mapv(|x| sigmoid(-x))),
            Op::Log(a) => acc(grads, *a, g / val(*a)),
            Op::Exp(a) => acc(grads, *a, g * out),
            Op::Square(a) => acc(grads, *a, g * &val(*a).mapv(|x| 2.0 * x)),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = val(*p).ncols();
                    acc(grads, *p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = val(*p).nrows();
                    acc(grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::SliceCols(a, start) => {
                let mut full = Tensor::zeros(val(*a).dim());
                full.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                acc(grads, *a, full);
            }
            Op::SliceRows(a, start) => {
                let mut full = Tensor::zeros(val(*a).dim());
                full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                acc(grads, *a, full);
            }
            Op::Gather(a, rows) => {
                let mut full = Tensor::zeros(val(*a).dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dst = full.row_mut(r);
                    dst += &g.row(k);
                }
                acc(grads, *a, full);
            }
            Op::Transpose(a) => acc(grads, *a, g.t().to_owned()),
            Op::Sum(a) => acc(grads, *a, Tensor::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::SumCols(a) => {
                let (r, c) = val(*a).dim();
                acc(grads, *a, Tensor::from_shape_fn((r, c), |(i, _)| g[[i, 0]]));
            }
            Op::LogSoftmax(a) => {
                let gs = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(grads, *a, g - &(out.mapv(f64::exp) * &gs));
            }
            Op::Softmax(a) => {
                let dot = (g * out).sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(grads, *a, out * &(g - &dot));
            }
            Op::Pick(a, cols) => {
                let mut full = Tensor::zeros(val(*a).dim());
                for (i, &c) in cols.iter().enumerate() {
                    full[[i, c]] += g[[i, 0]];
                }
                acc(grads, *a, full);
            }
            Op::LstmCell(gates, c_prev) => {
                let z = val(*gates);
                let c0 = val(*c_prev);
                let h = c0.ncols();
                let mut dz = Tensor::zeros(z.dim());
                let mut dc0 = Tensor::zeros(c0.dim());
                for r in 0..c0.nrows() {
                    for k in 0..h {
                        let i = sigmoid(z[[r, k]]);
                        let f = sigmoid(z[[r, h + k]]);
                        let gg = z[[r, 2 * h + k]].tanh();
                        let o = sigmoid(z[[r, 3 * h + k]]);
                        let c = out[[r, h + k]];
                        let tc = c.tanh();
                        let gh = g[[r, k]];
                        let dc = g[[r, h + k]] + gh * o * (1.0 - tc * tc);
                        dz[[r, k]] = dc * gg * i * (1.0 - i);
                        dz[[r, h + k]] = dc * c0[[r, k]] * f * (1.0 - f);
                        dz[[r, 2 * h + k]] = dc * i * (1.0 - gg * gg);
                        dz[[r, 3 * h + k]] = gh * tc * o * (1.0 - o);
                        dc0[[r, k]] = dc * f;
                    }
                }
                acc(grads, *gates, dz);
                acc(grads, *c_prev, dc0);
            }
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient with respect to `v`; zero-shaped `None` if `v` did not affect the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_gradients, random_tensor};

    fn store() -> ParamStore {
        ParamStore::new()
    }

    /// Each unary/binary op checked on its own against central differences.
    #[test]
    fn elementwise_ops_match_finite_differences() {
        let st = store();
        let ops: Vec<(&str, Box<dyn Fn(&mut Graph, Var, Var) -> Var>)> = vec![
            ("matmul", Box::new(|g, a, b| {
                let bt = g.transpose(b);
                g.matmul(a, bt)
            })),
            ("add", Box::new(|g, a, b| g.add(a, b))),
            ("sub", Box::new(|g, a, b| g.sub(a, b))),
            ("mul", Box::new(|g, a, b| g.mul(a, b))),
            ("sigmoid", Box::new(|g, a, _| g.sigmoid(a))),
            ("tanh", Box::new(|g, a, _| g.tanh(a))),
            ("softplus", Box::new(|g, a, _| g.softplus(a))),
            ("log_sigmoid", Box::new(|g, a, _| g.log_sigmoid(a))),
            ("exp", Box::new(|g, a, _| g.exp(a))),
            ("square", Box::new(|g, a, b| {
                let d = g.sub(a, b);
                g.square(d)
            })),
            ("log", Box::new(|g, a, _| {
                let sq = g.square(a);
                let p = g.shift(sq, 1.0);
                g.log(p)
            })),
            ("log_softmax", Box::new(|g, a, _| g.log_softmax(a))),
            ("softmax", Box::new(|g, a, _| g.softmax(a))),
            ("concat/slice", Box::new(|g, a, b| {
                let c = g.concat_cols(&[a, b]);
                let r = g.concat_rows(&[c, c]);
                let s1 = g.slice_cols(r, 1, 3);
                g.slice_rows(s1, 2, 2)
            })),
            ("gather", Box::new(|g, a, _| g.gather(a, &[2, 0, 2]))),
            ("sum_cols", Box::new(|g, a, b| {
                let s = g.sum_cols(a);
                g.mul_col(b, s)
            })),
            ("pick", Box::new(|g, a, _| {
                let l = g.log_softmax(a);
                g.pick(l, &[0, 3, 1])
            })),
            ("add_row", Box::new(|g, a, b| {
                let r = g.row(b, 1);
                g.add_row(a, r)
            })),
        ];
        for (name, f) in ops {
            let a0 = random_tensor((3, 4), 11);
            let b0 = random_tensor((3, 4), 12);
            let err = check_input_gradients(&st, &[a0, b0], |g, v| {
                let out = f(g, v[0], v[1]);
                // weight the outputs so that every entry matters differently
                let (r, c) = g.shape(out);
                let w = g.input(Tensor::from_shape_fn((r, c), |(i, j)| 1.0 + 0.3 * i as f64 - 0.2 * j as f64));
                let y = g.mul(out, w);
                g.sum(y)
            });
            assert!(err < 1e-6, "{}: relative error {}", name, err);
        }
    }

    #[test]
    fn lstm_cell_gradient() {
        let st = store();
        let z = random_tensor((2, 12), 3);
        let c = random_tensor((2, 3), 4);
        let err = check_input_gradients(&st, &[z, c], |g, v| {
            let hc = g.lstm_cell(v[0], v[1]);
            let w = g.input(random_tensor((2, 6), 5));
            let y = g.mul(hc, w);
            g.sum(y)
        });
        assert!(err < 1e-6, "relative error {}", err);
    }

    #[test]
    fn stable_scalar_functions() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(1000.0).is_finite());
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-1000.0).is_finite());
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let st = store();
        let mut g = Graph::new(&st);
        let x = g.input(Tensor::ones((2, 2)));
        let y = g.dropout(x, 0.5);
        assert_eq!(x, y);
    }
}
