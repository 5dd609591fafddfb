//! Reverse-mode differentiation over dense row-major matrices.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}{:?}", self.rows, self.cols, self.data)
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} does not fit {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul {}x{} by {}x{}", self.rows, self.cols, other.rows, other.cols);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (x, b) in o.iter_mut().zip(other.row(k)) {
                    *x += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub type Var = usize;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    /// `a + row` broadcast over rows.
    AddRow(Var, Var),
    /// `a * row` broadcast over rows.
    MulRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    /// Row-wise softmax over unmasked entries; masked entries are 0.
    Softmax(Var, Vec<bool>),
    /// Row-wise log-softmax over unmasked entries; masked entries are 0.
    LogSoftmax(Var, Vec<bool>),
    /// Row-wise normalization to zero mean and unit variance.
    LayerNorm(Var),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    Sum(Var),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v].value
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols));
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect());
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((r.rows, r.cols), (1, self.value(a).cols));
        let mut v = self.value(a).clone();
        for (i, x) in v.data.iter_mut().enumerate() {
            *x += r.data[i % r.cols];
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((r.rows, r.cols), (1, self.value(a).cols));
        let mut v = self.value(a).clone();
        for (i, x) in v.data.iter_mut().enumerate() {
            *x *= r.data[i % r.cols];
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Row-wise softmax; `mask[i]` false excludes entry `i` (row-major).
    /// Every row needs at least one unmasked entry.
    pub fn softmax(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let v = softmax_rows(self.value(a), &mask, false);
        self.push(v, Op::Softmax(a, mask))
    }

    pub fn log_softmax(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let v = softmax_rows(self.value(a), &mask, true);
        self.push(v, Op::LogSoftmax(a, mask))
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let (mean, inv) = moments(x.row(r));
            for c in 0..x.cols {
                v.data[r * x.cols + c] = (x.at(r, c) - mean) * inv;
            }
        }
        self.push(v, Op::LayerNorm(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * x.cols);
        for &i in &idx {
            data.extend_from_slice(x.row(i));
        }
        let v = Mat::from_vec(idx.len(), x.cols, data);
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows, y.rows);
        let mut data = Vec::with_capacity(x.rows * (x.cols + y.cols));
        for r in 0..x.rows {
            data.extend_from_slice(x.row(r));
            data.extend_from_slice(y.row(r));
        }
        let v = Mat::from_vec(x.rows, x.cols + y.cols, data);
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Gradients of the scalar `root` with respect to every node; `None` for
    /// nodes the root does not depend on.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!((self.value(root).rows, self.value(root).cols), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[root] = Some(Mat::from_vec(1, 1, vec![1.0]));
        for v in (0..=root).rev() {
            let Some(g) = grads[v].take() else { continue };
            self.propagate(v, &g, &mut grads);
            grads[v] = Some(g);
        }
        grads
    }

    fn propagate(&self, v: Var, g: &Mat, grads: &mut [Option<Mat>]) {
        let out = &self.nodes[v].value;
        let mut acc = |target: Var, delta: Mat| match &mut grads[target] {
            Some(m) => m.add_assign(&delta),
            slot => *slot = Some(delta),
        };
        match &self.nodes[v].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                acc(*a, g.matmul(&y.transpose()));
                acc(*b, x.transpose().matmul(g));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                acc(*a, Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect()));
                acc(*b, Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect()));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, column_sums(g));
            }
            Op::MulRow(a, row) => {
                let (x, r) = (self.value(*a), self.value(*row));
                let mut ga = g.clone();
                for (i, d) in ga.data.iter_mut().enumerate() {
                    *d *= r.data[i % r.cols];
                }
                acc(*a, ga);
                let gx = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect());
                acc(*row, column_sums(&gx));
            }
            Op::Scale(a, s) => acc(*a, g.map(|d| d * s)),
            Op::Tanh(a) => {
                let d = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&out.data).map(|(d, y)| d * (1.0 - y * y)).collect());
                acc(*a, d);
            }
            Op::Softmax(a, mask) => {
                let mut d = Mat::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let dot: f64 = (0..g.cols).map(|c| g.at(r, c) * out.at(r, c)).sum();
                    for c in 0..g.cols {
                        let i = r * g.cols + c;
                        if mask[i] {
                            d.data[i] = out.data[i] * (g.data[i] - dot);
                        }
                    }
                }
                acc(*a, d);
            }
            Op::LogSoftmax(a, mask) => {
                let mut d = Mat::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let total: f64 = (0..g.cols).filter(|&c| mask[r * g.cols + c]).map(|c| g.at(r, c)).sum();
                    for c in 0..g.cols {
                        let i = r * g.cols + c;
                        if mask[i] {
                            d.data[i] = g.data[i] - out.data[i].exp() * total;
                        }
                    }
                }
                acc(*a, d);
            }
            Op::LayerNorm(a) => {
                let x = self.value(*a);
                let n = x.cols as f64;
                let mut d = Mat::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (_, inv) = moments(x.row(r));
                    let gy = g.row(r);
                    let y = out.row(r);
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = gy.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / n;
                    for c in 0..g.cols {
                        d.data[r * g.cols + c] = inv * (gy[c] - mean_g - y[c] * mean_gy);
                    }
                }
                acc(*a, d);
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let mut d = Mat::zeros(x.rows, x.cols);
                for (k, &i) in idx.iter().enumerate() {
                    for c in 0..x.cols {
                        d.data[i * x.cols + c] += g.at(k, c);
                    }
                }
                acc(*a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols;
                let cb = self.value(*b).cols;
                let mut da = Mat::zeros(g.rows, ca);
                let mut db = Mat::zeros(g.rows, cb);
                for r in 0..g.rows {
                    da.data[r * ca..(r + 1) * ca].copy_from_slice(&g.row(r)[..ca]);
                    db.data[r * cb..(r + 1) * cb].copy_from_slice(&g.row(r)[ca..]);
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                acc(*a, Mat::from_vec(x.rows, x.cols, vec![g.data[0]; x.rows * x.cols]));
            }
        }
    }
}

fn moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

fn column_sums(g: &Mat) -> Mat {
    let mut out = Mat::zeros(1, g.cols);
    for r in 0..g.rows {
        for (o, x) in out.data.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    out
}

fn softmax_rows(x: &Mat, mask: &[bool], log: bool) -> Mat {
    assert_eq!(mask.len(), x.data.len(), "mask shape");
    let mut out = Mat::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let live = |c: &usize| mask[r * x.cols + c];
        let max = (0..x.cols).filter(live).map(|c| x.at(r, c)).fold(f64::NEG_INFINITY, f64::max);
        assert!(max > f64::NEG_INFINITY, "softmax row {r} is fully masked");
        let z: f64 = (0..x.cols).filter(live).map(|c| (x.at(r, c) - max).exp()).sum();
        let lz = z.ln();
        for c in (0..x.cols).filter(live) {
            let s = x.at(r, c) - max;
            out.data[r * x.cols + c] = if log { s - lz } else { s.exp() / z };
        }
    }
    out
}
