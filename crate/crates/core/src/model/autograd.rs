//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters are borrowed
//! from a [`ParamStore`], never copied, and [`Graph::backward`] returns one
//! gradient per parameter reached from the root.

use serde::{Deserialize, Serialize};

use crate::model::params::{Gradients, ParamId, ParamStore};
use crate::model::tensor::{softmax_in_place, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Pointwise nonlinearity used by the feed-forward blocks and the heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Tanh approximation of GELU.
    #[default]
    Gelu,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let c = T::of((2.0 / std::f64::consts::PI).sqrt());
                let inner = c * (x + T::of(0.044715) * x * x * x);
                T::of(0.5) * x * (T::one() + inner.tanh())
            }
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let c = T::of((2.0 / std::f64::consts::PI).sqrt());
                let k = T::of(0.044715);
                let t = (c * (x + k * x * x * x)).tanh();
                let half = T::of(0.5);
                half * (T::one() + t)
                    + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * k * x * x)
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
        }
    }
}

enum Value<T> {
    Param(ParamId),
    Owned(Matrix<T>),
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    MulConst(Var, Matrix<T>),
    Activate(Var, Activation),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        normalized: Matrix<T>,
        inv_std: Vec<T>,
        beta: Var,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    CrossEntropySum {
        logits: Var,
        labels: Vec<Option<usize>>,
        probs: Matrix<T>,
    },
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
}

pub struct Graph<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        match &self.nodes[v.0].value {
            Value::Param(id) => self.params.value(*id),
            Value::Owned(m) => m,
        }
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_nt(self.value(b));
        self.push(out, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a single row");
        assert_eq!(r.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).scale(factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Matrix<T>) -> Var {
        let out = self.value(a).hadamard(&mask);
        self.push(out, Op::MulConst(a, mask))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        let out = self.value(a).map(|x| act.apply(x));
        self.push(out, Op::Activate(a, act))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax_rows();
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let n = T::of(cols as f64);
        let mut normalized = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = input.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            for (o, &v) in normalized.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = normalized.clone();
        for r in 0..rows {
            for ((o, &gv), &bv) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                normalized,
                inv_std,
                beta,
            },
        )
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_cols(start, end);
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let out = {
            let values: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
            Matrix::concat_cols(&values)
        };
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Summed token cross-entropy as a `1 × 1` node. `None` labels are skipped.
    pub fn cross_entropy_sum(&mut self, logits: Var, labels: &[Option<usize>]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), labels.len(), "one label per logits row");
        let mut probs = l.clone();
        let mut total = T::zero();
        for (r, label) in labels.iter().enumerate() {
            let row = l.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            softmax_in_place(probs.row_mut(r));
            if let Some(gold) = *label {
                total += lse - row[gold];
            }
        }
        self.push(
            Matrix::from_vec(1, 1, vec![total]),
            Op::CrossEntropySum {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.get(0, 0)
    }

    /// Reverse sweep from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut adjoints: Vec<Option<Matrix<T>>> = Vec::with_capacity(self.nodes.len());
        adjoints.resize_with(self.nodes.len(), || None);
        adjoints[root.0] = Some(Matrix::filled(1, 1, T::one()));
        let mut grads = Gradients::empty(self.params.len());

        for idx in (0..=root.0).rev() {
            let Some(upstream) = adjoints[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(id) => grads.accumulate_into(*id, upstream),
                Op::MatMul(a, b) => {
                    let da = upstream.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&upstream);
                    accumulate(&mut adjoints, *a, da);
                    accumulate(&mut adjoints, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    // c = a bᵀ: da = dc b, db = dcᵀ a
                    let da = upstream.matmul(self.value(*b));
                    let db = upstream.matmul_tn(self.value(*a));
                    accumulate(&mut adjoints, *a, da);
                    accumulate(&mut adjoints, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoints, *b, upstream.clone());
                    accumulate(&mut adjoints, *a, upstream);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut adjoints, *row, upstream.sum_rows());
                    accumulate(&mut adjoints, *a, upstream);
                }
                Op::Scale(a, factor) => accumulate(&mut adjoints, *a, upstream.scale(*factor)),
                Op::MulConst(a, mask) => accumulate(&mut adjoints, *a, upstream.hadamard(mask)),
                Op::Activate(a, act) => {
                    let x = self.value(*a);
                    let mut d = upstream;
                    for (g, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                        *g *= act.derivative(xv);
                    }
                    accumulate(&mut adjoints, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.value(Var(idx));
                    let mut d = upstream;
                    for r in 0..d.rows() {
                        let yr = y.row(r);
                        let dot: T = d.row(r).iter().zip(yr).map(|(&g, &p)| g * p).sum();
                        for (g, &p) in d.row_mut(r).iter_mut().zip(yr) {
                            *g = p * (*g - dot);
                        }
                    }
                    accumulate(&mut adjoints, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    normalized,
                    inv_std,
                    beta,
                } => {
                    let g = self.value(*gamma).data();
                    let (rows, cols) = upstream.shape();
                    let n = T::of(cols as f64);
                    let mut dx = Matrix::zeros(rows, cols);
                    let mut dgamma = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        let dy = upstream.row(r);
                        let xhat = normalized.row(r);
                        let mut sum_dxhat = T::zero();
                        let mut sum_dxhat_xhat = T::zero();
                        for c in 0..cols {
                            let dxhat = dy[c] * g[c];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat[c];
                            dgamma.data_mut()[c] += dy[c] * xhat[c];
                        }
                        let scale = inv_std[r] / n;
                        let out = dx.row_mut(r);
                        for c in 0..cols {
                            let dxhat = dy[c] * g[c];
                            out[c] = scale * (n * dxhat - sum_dxhat - xhat[c] * sum_dxhat_xhat);
                        }
                    }
                    accumulate(&mut adjoints, *beta, upstream.sum_rows());
                    accumulate(&mut adjoints, *gamma, dgamma);
                    accumulate(&mut adjoints, *x, dx);
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut d = Matrix::zeros(t.rows(), t.cols());
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, &g) in d.row_mut(id).iter_mut().zip(upstream.row(i)) {
                            *o += g;
                        }
                    }
                    accumulate(&mut adjoints, *table, d);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..upstream.rows() {
                        let width = upstream.cols();
                        d.row_mut(r)[*start..*start + width].copy_from_slice(upstream.row(r));
                    }
                    accumulate(&mut adjoints, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        accumulate(&mut adjoints, p, upstream.slice_cols(offset, offset + width));
                        offset += width;
                    }
                }
                Op::CrossEntropySum {
                    logits,
                    labels,
                    probs,
                } => {
                    let seed = upstream.get(0, 0);
                    let mut d = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, label) in labels.iter().enumerate() {
                        if let Some(gold) = *label {
                            let out = d.row_mut(r);
                            out.copy_from_slice(probs.row(r));
                            out[gold] -= T::one();
                            for v in out.iter_mut() {
                                *v *= seed;
                            }
                        }
                    }
                    accumulate(&mut adjoints, *logits, d);
                }
            }
        }
        grads
    }
}

fn accumulate<T: Scalar>(adjoints: &mut [Option<Matrix<T>>], v: Var, grad: Matrix<T>) {
    match &mut adjoints[v.0] {
        Some(existing) => existing.add_assign(&grad),
        slot @ None => *slot = Some(grad),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Central differences over every entry of every parameter.
    fn check_gradients(store: &mut ParamStore<f64>, loss: impl Fn(&ParamStore<f64>) -> f64, analytic: &Gradients<f64>) {
        let eps = 1e-6;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let len = store.value(id).data().len();
            for k in 0..len {
                let orig = store.value(id).data()[k];
                store.value_mut(id).data_mut()[k] = orig + eps;
                let plus = loss(store);
                store.value_mut(id).data_mut()[k] = orig - eps;
                let minus = loss(store);
                store.value_mut(id).data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let exact = analytic.entry(id, k);
                let denom = numeric.abs().max(exact.abs()).max(1e-6);
                assert!(
                    (numeric - exact).abs() / denom < 1e-5,
                    "{}[{k}]: analytic {exact} vs numeric {numeric}",
                    store.get(id).name
                );
            }
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let table = store.insert("emb", random_matrix(&mut rng, 6, 4));
        let w = store.insert("w", random_matrix(&mut rng, 4, 4));
        let b = store.insert("b", random_matrix(&mut rng, 1, 4));
        let gamma = store.insert("ln.weight", random_matrix(&mut rng, 1, 4));
        let beta = store.insert("ln.bias", random_matrix(&mut rng, 1, 4));
        let out = store.insert("out", random_matrix(&mut rng, 6, 3));
        let ids = [0usize, 3, 3, 5];
        let labels = [Some(0), None, Some(2), Some(1)];
        let mask = Matrix::from_fn(4, 4, |r, c| if (r + c) % 3 == 0 { 0.0 } else { 1.25 });

        let build = |store: &ParamStore<f64>| -> (f64, Gradients<f64>) {
            let mut g = Graph::new(store);
            let t = g.param(table);
            let x = g.gather(t, &ids);
            let wv = g.param(w);
            let bv = g.param(b);
            let h = g.matmul(x, wv);
            let h = g.add_row(h, bv);
            let h = g.activate(h, Activation::Gelu);
            let gv = g.param(gamma);
            let bt = g.param(beta);
            let h = g.layer_norm(h, gv, bt, 1e-5);
            let h = g.mul_const(h, mask.clone());
            let scores = g.matmul_nt(h, x);
            let scores = g.scale(scores, 0.5);
            let attn = g.softmax_rows(scores);
            let ctx = g.matmul(attn, h);
            let ctx = g.add(ctx, x);
            let left = g.slice_cols(ctx, 0, 2);
            let right = g.slice_cols(ctx, 2, 4);
            let right = g.activate(right, Activation::Tanh);
            let joined = g.concat_cols(&[right, left, x]);
            let sliced = g.slice_cols(joined, 0, 6);
            let ov = g.param(out);
            let logits = g.matmul(sliced, ov);
            let loss = g.cross_entropy_sum(logits, &labels);
            (g.scalar(loss), g.backward(loss))
        };
        let (_, analytic) = build(&store);
        check_gradients(&mut store, |s| build(s).0, &analytic);
    }

    #[test]
    fn unreached_params_have_no_gradient() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Matrix::<f64>::filled(2, 2, 0.5));
        let unused = store.insert("unused", Matrix::<f64>::filled(2, 2, 0.5));
        let mut g = Graph::new(&store);
        let av = g.param(a);
        let loss = g.cross_entropy_sum(av, &[Some(0), Some(1)]);
        let grads = g.backward(loss);
        assert!(grads.get(a).is_some());
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.max_abs(unused), 0.0);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_classes() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(Matrix::zeros(2, 4));
        let loss = g.cross_entropy_sum(x, &[Some(1), Some(3)]);
        assert!((g.scalar(loss) - 2.0 * 4f64.ln()).abs() < 1e-12);
    }
}
