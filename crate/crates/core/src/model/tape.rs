//! Minimal reverse-mode autodiff over [`Matrix`] values.
//!
//! A [`Tape`] records one forward pass. Parameter leaves borrow their value from a
//! [`ParamStore`]; [`Tape::backward`] adds parameter gradients into a caller buffer.

use super::params::ParamStore;
use super::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    MatMulTransB(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Tanh(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    ConcatCols(Vec<Var>),
    Cosine(Var, Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
}

struct Node {
    op: Op,
    // None for parameter leaves, whose value lives in the store.
    value: Option<Matrix>,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        match (&self.nodes[v.0].value, &self.nodes[v.0].op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.nodes.push(Node { op: Op::Param(id), value: None });
        Var(self.nodes.len() - 1)
    }

    pub fn param_named(&mut self, name: &str) -> Var {
        let id = self.params.id(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(id)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulTransB(a, b), v)
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(bias));
        assert_eq!((bm.rows, bm.cols), (1, am.cols), "bias shape");
        let mut v = am.clone();
        for r in 0..v.rows {
            for c in 0..v.cols {
                *v.at_mut(r, c) += bm.data[c];
            }
        }
        self.push(Op::AddRowBias(a, bias), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    /// Column means: `n x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut v = Matrix::zeros(1, m.cols);
        for r in 0..m.rows {
            for (o, x) in v.data.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        let n = m.rows as f64;
        v.data.iter_mut().for_each(|x| *x /= n);
        self.push(Op::MeanRows(a), v)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut v = m.clone();
        for r in 0..v.rows {
            let row = &mut v.data[r * m.cols..(r + 1) * m.cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.shape(), bm.shape(), "hadamard shapes");
        let data = am.data.iter().zip(&bm.data).map(|(x, y)| x * y).collect();
        let v = Matrix::from_vec(am.rows, am.cols, data);
        self.push(Op::Hadamard(a, b), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "concat rows");
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Cosine similarity of two row vectors as a `1 x 1` value; 0 if either norm is 0.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.shape(), bm.shape(), "cosine shapes");
        let (na, nb) = (norm(&am.data), norm(&bm.data));
        let c = if na == 0.0 || nb == 0.0 { 0.0 } else { dot(&am.data, &bm.data) / (na * nb) };
        self.push(Op::Cosine(a, b), Matrix::scalar(c))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let m = self.value(a);
        let mut v = Matrix::zeros(idx.len(), m.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.data[r * m.cols..(r + 1) * m.cols].copy_from_slice(m.row(i));
        }
        self.push(Op::GatherRows(a, idx.to_vec()), v)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols, "slice out of range");
        let mut v = Matrix::zeros(m.rows, len);
        for r in 0..m.rows {
            v.data[r * len..(r + 1) * len].copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols(a, start), v)
    }

    /// Backpropagates `seed · d(out)/d(param)` into `grads` (indexed like the store).
    /// `out` must be `1 x 1`.
    pub fn backward(&self, out: Var, seed: f64, grads: &mut [Matrix]) {
        assert_eq!(self.value(out).shape(), (1, 1), "backward from a non-scalar");
        let mut g: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        g[out.0] = Some(Matrix::scalar(seed));

        for i in (0..=out.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads[*id].add_assign(&gi),
                Op::MatMul(a, b) => {
                    let da = gi.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&gi);
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::MatMulTransB(a, b) => {
                    let da = gi.matmul(self.value(*b));
                    let db = gi.t_matmul(self.value(*a));
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::AddRowBias(a, bias) => {
                    let mut db = Matrix::zeros(1, gi.cols);
                    for r in 0..gi.rows {
                        for (o, x) in db.data.iter_mut().zip(gi.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut g, *bias, db);
                    acc(&mut g, *a, gi);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *b, gi.clone());
                    acc(&mut g, *a, gi);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let data = gi.data.iter().zip(&y.data).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    acc(&mut g, *a, Matrix::from_vec(gi.rows, gi.cols, data));
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).rows;
                    let mut da = Matrix::zeros(n, gi.cols);
                    for r in 0..n {
                        for c in 0..gi.cols {
                            *da.at_mut(r, c) = gi.data[c] / n as f64;
                        }
                    }
                    acc(&mut g, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().unwrap();
                    let mut da = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let s: f64 = gi.row(r).iter().zip(y.row(r)).map(|(gv, yv)| gv * yv).sum();
                        for c in 0..y.cols {
                            *da.at_mut(r, c) = y.at(r, c) * (gi.at(r, c) - s);
                        }
                    }
                    acc(&mut g, *a, da);
                }
                Op::Scale(a, s) => acc(&mut g, *a, gi.map(|x| x * s)),
                Op::Hadamard(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let da = gi.data.iter().zip(&bm.data).map(|(x, y)| x * y).collect();
                    let db = gi.data.iter().zip(&am.data).map(|(x, y)| x * y).collect();
                    acc(&mut g, *a, Matrix::from_vec(gi.rows, gi.cols, da));
                    acc(&mut g, *b, Matrix::from_vec(gi.rows, gi.cols, db));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        let mut dp = Matrix::zeros(gi.rows, cols);
                        for r in 0..gi.rows {
                            dp.data[r * cols..(r + 1) * cols].copy_from_slice(&gi.row(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut g, *p, dp);
                    }
                }
                Op::Cosine(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let (na, nb) = (norm(&am.data), norm(&bm.data));
                    if na == 0.0 || nb == 0.0 {
                        continue;
                    }
                    let c = node.value.as_ref().unwrap().data[0];
                    let s = gi.data[0];
                    let da = am
                        .data
                        .iter()
                        .zip(&bm.data)
                        .map(|(x, y)| s * (y / (na * nb) - c * x / (na * na)))
                        .collect();
                    let db = am
                        .data
                        .iter()
                        .zip(&bm.data)
                        .map(|(x, y)| s * (x / (na * nb) - c * y / (nb * nb)))
                        .collect();
                    acc(&mut g, *a, Matrix::from_vec(am.rows, am.cols, da));
                    acc(&mut g, *b, Matrix::from_vec(bm.rows, bm.cols, db));
                }
                Op::GatherRows(a, idx) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Matrix::zeros(rows, cols);
                    for (r, &k) in idx.iter().enumerate() {
                        for (o, x) in da.data[k * cols..(k + 1) * cols].iter_mut().zip(gi.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut g, *a, da);
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        da.data[r * cols + start..r * cols + start + gi.cols].copy_from_slice(gi.row(r));
                    }
                    acc(&mut g, *a, da);
                }
            }
        }
    }
}

fn acc(g: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut g[v.0] {
        Some(m) => m.add_assign(&d),
        slot => *slot = Some(d),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamSpec;

    fn store() -> ParamStore {
        ParamStore::new(
            &[
                ParamSpec::uniform("w", 3, 4, 1.0),
                ParamSpec::uniform("v", 4, 3, 1.0),
                ParamSpec::uniform("b", 1, 4, 1.0),
                ParamSpec::uniform("e", 6, 3, 1.0),
            ],
            9,
        )
    }

    // Touches every op once and reduces to a scalar.
    fn graph(t: &mut Tape<'_>) -> Var {
        let x = t.input(Matrix::from_vec(2, 3, vec![0.3, -0.2, 0.9, 1.1, 0.4, -0.7]));
        let w = t.param_named("w");
        let v = t.param_named("v");
        let b = t.param_named("b");
        let e = t.param_named("e");
        let h = t.matmul(x, w);
        let h = t.add_row_bias(h, b);
        let h = t.tanh(h);
        let tok = t.gather_rows(e, &[4, 1, 4]);
        let k = t.matmul(h, v);
        let s = t.matmul_t(tok, k);
        let s = t.scale(s, 0.7);
        let p = t.softmax_rows(s);
        let ctx = t.matmul(p, k);
        let mixed = t.add(ctx, tok);
        let sl = t.slice_cols(mixed, 1, 2);
        let m = t.mean_rows(mixed);
        let ms = t.mean_rows(sl);
        let hm = t.mean_rows(h);
        let hh = t.hadamard(hm, b);
        let m2 = t.slice_cols(m, 0, 2);
        let c = t.cosine(m2, ms);
        let cat = t.concat_cols(&[hh, c, ms]);
        let ones = t.input(Matrix::from_vec(7, 1, vec![0.5, -1.0, 0.25, 2.0, 1.5, -0.3, 0.8]));
        t.matmul(cat, ones)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut ps = store();
        let mut grads = ps.zero_grads();
        {
            let mut t = Tape::new(&ps);
            let out = graph(&mut t);
            t.backward(out, 1.0, &mut grads);
        }
        let f = |ps: &ParamStore| {
            let mut t = Tape::new(ps);
            let o = graph(&mut t);
            t.value(o).data[0]
        };
        let h = 1e-6;
        for id in 0..ps.len() {
            for k in 0..ps.value(id).len() {
                let orig = ps.value(id).data[k];
                ps.value_mut(id).data[k] = orig + h;
                let up = f(&ps);
                ps.value_mut(id).data[k] = orig - h;
                let dn = f(&ps);
                ps.value_mut(id).data[k] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads[id].data[k];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-5, "{} [{k}]: fd {fd} vs analytic {an}", ps.name(id));
            }
        }
    }

    #[test]
    fn seed_scales_gradient() {
        let ps = store();
        let mut g1 = ps.zero_grads();
        let mut g3 = ps.zero_grads();
        let mut t = Tape::new(&ps);
        let out = graph(&mut t);
        t.backward(out, 1.0, &mut g1);
        t.backward(out, 3.0, &mut g3);
        for (a, b) in g1.iter().zip(&g3) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((3.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
