//! Reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values are 2-D
//! arrays with the batch along rows. Calling [`Tape::backward`] on a `1x1`
//! node walks the records in reverse and accumulates gradients for every node
//! that depends on a gradient-tracking leaf.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Column ranges treated as independent categorical groups.
pub type Segments = Vec<(usize, usize)>;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Softmax(Var, Segments),
    LogSoftmax(Var, Segments),
    StraightThrough(Var),
    Nll(Var, Vec<usize>),
    Msre(Var, Matrix),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Array1<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for later reverse traversal.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`, or `None` if the loss does not
    /// depend on it through any gradient-tracking path.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Matrix {
        self.get(var).cloned().unwrap_or_else(|| Matrix::zeros(shape))
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient-tracking leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_const(&mut self, v: f64) -> Var {
        self.constant(Matrix::from_elem((1, 1), v))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let value = av.dot(bv);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xs, rs) = (self.shape(x), self.shape(row));
        if rs.0 != 1 || rs.1 != xs.1 {
            return Err(shape_err("add_row", &[xs.0, xs.1], &[rs.0, rs.1]));
        }
        let value = self.value(x) + self.value(row);
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    /// Multiplies every row of `x` element-wise by a `1 x n` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xs, rs) = (self.shape(x), self.shape(row));
        if rs.0 != 1 || rs.1 != xs.1 {
            return Err(shape_err("mul_row", &[xs.0, xs.1], &[rs.0, rs.1]));
        }
        let value = self.value(x) * self.value(row);
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, Op::MulRow(x, row), rg))
    }

    /// Multiplies `x` by a `1 x 1` node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(shape_err("mul_scalar", &[1, 1], self.value(s).shape()));
        }
        let value = self.value(x) * self.scalar(s);
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(value, Op::MulScalar(x, s), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x) * factor;
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Adds a constant matrix of identical shape; gradients pass through.
    pub fn add_const(&mut self, x: Var, c: &Matrix) -> Result<Var> {
        if self.shape(x) != c.dim() {
            return Err(shape_err("add_const", self.value(x).shape(), c.shape()));
        }
        let value = self.value(x) + c;
        let rg = self.rg(x);
        Ok(self.push(value, Op::AddConst(x), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::exp);
        let rg = self.rg(x);
        self.push(value, Op::Exp(x), rg)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::ln);
        let rg = self.rg(x);
        self.push(value, Op::Log(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v * v);
        let rg = self.rg(x);
        self.push(value, Op::Square(x), rg)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::from_elem((1, 1), self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Mean of all entries, as a `1 x 1` node.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Matrix::from_elem((1, 1), v.sum() / v.len() as f64);
        let rg = self.rg(x);
        self.push(value, Op::Mean(x), rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let sq = self.square(x);
        self.sum(sq)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat_cols of nothing".into()))?;
        let rows = self.shape(*first).0;
        if let Some(bad) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(shape_err("concat_cols", &[rows], &[self.shape(*bad).0]));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(x).1;
        if start >= end || end > cols {
            return Err(Error::Shape(format!(
                "slice_cols {start}..{end} out of range for {cols} columns"
            )));
        }
        let value = self.value(x).slice(ndarray::s![.., start..end]).to_owned();
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceCols(x, start), rg))
    }

    fn check_segments(&self, x: Var, segs: &Segments) -> Result<()> {
        let cols = self.shape(x).1;
        if segs.iter().any(|&(a, b)| a >= b || b > cols) {
            return Err(Error::Shape(format!("segments {segs:?} invalid for {cols} columns")));
        }
        Ok(())
    }

    /// Row-wise softmax applied independently within each column segment.
    pub fn softmax(&mut self, x: Var, segs: Segments) -> Result<Var> {
        self.check_segments(x, &segs)?;
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            for &(a, b) in &segs {
                let seg = row.slice_mut(ndarray::s![a..b]);
                softmax_in_place(seg);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax(x, segs), rg))
    }

    pub fn log_softmax(&mut self, x: Var, segs: Segments) -> Result<Var> {
        self.check_segments(x, &segs)?;
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            for &(a, b) in &segs {
                let mut seg = row.slice_mut(ndarray::s![a..b]);
                let m = seg.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = m + seg.mapv(|v| (v - m).exp()).sum().ln();
                seg.mapv_inplace(|v| v - lse);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::LogSoftmax(x, segs), rg))
    }

    /// Forward value is the per-segment one-hot argmax of `soft`; the
    /// backward pass treats the node as the identity on `soft`.
    pub fn straight_through(&mut self, soft: Var, segs: &Segments) -> Result<Var> {
        self.check_segments(soft, segs)?;
        let src = self.value(soft);
        let mut value = Matrix::zeros(src.dim());
        for (r, row) in src.rows().into_iter().enumerate() {
            for &(a, b) in segs {
                let seg: Vec<f64> = row.slice(ndarray::s![a..b]).to_vec();
                value[[r, a + crate::workload::argmax(&seg)]] = 1.0;
            }
        }
        let rg = self.rg(soft);
        Ok(self.push(value, Op::StraightThrough(soft), rg))
    }

    /// Mean over rows of `-logp[row, label[row]]`.
    pub fn nll(&mut self, logp: Var, labels: Vec<usize>) -> Result<Var> {
        let (rows, cols) = self.shape(logp);
        if labels.len() != rows {
            return Err(shape_err("nll", &[rows], &[labels.len()]));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {cols} classes"
            )));
        }
        let lp = self.value(logp);
        let total: f64 = labels.iter().enumerate().map(|(r, &l)| -lp[[r, l]]).sum();
        let value = Matrix::from_elem((1, 1), total / rows as f64);
        let rg = self.rg(logp);
        Ok(self.push(value, Op::Nll(logp, labels), rg))
    }

    /// Mean over rows of `Σ_j (1 - pred[r,j] / target[r,j])²`.
    pub fn msre(&mut self, pred: Var, target: Matrix) -> Result<Var> {
        if self.shape(pred) != target.dim() {
            return Err(shape_err("msre", self.value(pred).shape(), target.shape()));
        }
        if target.iter().any(|&y| !(y > 0.0)) {
            return Err(Error::InvalidArgument(
                "msre targets must be strictly positive".into(),
            ));
        }
        let p = self.value(pred);
        let total: f64 = Zip::from(p)
            .and(&target)
            .fold(0.0, |acc, &yh, &y| acc + (1.0 - yh / y).powi(2));
        let value = Matrix::from_elem((1, 1), total / p.nrows() as f64);
        let rg = self.rg(pred);
        Ok(self.push(value, Op::Msre(pred, target), rg))
    }

    /// Training-mode batch normalization over rows. Returns the output node
    /// and the batch mean and biased variance for running-stat updates.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Array1<f64>, Array1<f64>)> {
        let (rows, cols) = self.shape(x);
        if self.shape(gamma) != (1, cols) || self.shape(beta) != (1, cols) {
            return Err(shape_err("batch_norm", &[rows, cols], self.value(gamma).shape()));
        }
        if rows < 2 {
            return Err(Error::Shape("batch norm in train mode needs >= 2 rows".into()));
        }
        let xv = self.value(x);
        let mean = xv.mean_axis(Axis(0)).expect("non-empty");
        let centered = xv - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std;
        let g = self.value(gamma).row(0).to_owned();
        let b = self.value(beta).row(0).to_owned();
        let value = &xhat * &g + &b;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let out = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        );
        Ok((out, mean, var))
    }

    /// Accumulates gradients of the scalar `loss` into every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape("backward needs a 1x1 loss".into()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g * self.value(*b));
                }
                if self.rg(*b) {
                    acc(*b, g * self.value(*a));
                }
            }
            Op::AddRow(x, row) => {
                acc(*x, g.clone());
                if self.rg(*row) {
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulRow(x, row) => {
                if self.rg(*x) {
                    acc(*x, g * self.value(*row));
                }
                if self.rg(*row) {
                    acc(*row, (g * self.value(*x)).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulScalar(x, s) => {
                if self.rg(*x) {
                    acc(*x, g * self.scalar(*s));
                }
                if self.rg(*s) {
                    let d = Zip::from(g).and(self.value(*x)).fold(0.0, |a, &gi, &xi| a + gi * xi);
                    acc(*s, Matrix::from_elem((1, 1), d));
                }
            }
            Op::Scale(x, f) => acc(*x, g * *f),
            Op::AddConst(x) => acc(*x, g.clone()),
            Op::Relu(x) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*x))
                    .for_each(|d, &xi| {
                        if xi <= 0.0 {
                            *d = 0.0
                        }
                    });
                acc(*x, d);
            }
            Op::Exp(x) => acc(*x, g * &node.value),
            Op::Log(x) => acc(*x, g / self.value(*x)),
            Op::Square(x) => acc(*x, g * self.value(*x) * 2.0),
            Op::Sum(x) => acc(*x, Matrix::from_elem(self.shape(*x), g[[0, 0]])),
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                acc(*x, Matrix::from_elem(self.shape(*x), g[[0, 0]] / n));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    if self.rg(*p) {
                        acc(*p, g.slice(ndarray::s![.., start..start + w]).to_owned());
                    }
                    start += w;
                }
            }
            Op::SliceCols(x, start) => {
                let mut d = Matrix::zeros(self.shape(*x));
                let w = g.ncols();
                d.slice_mut(ndarray::s![.., *start..*start + w]).assign(g);
                acc(*x, d);
            }
            Op::Softmax(x, segs) => {
                // dx = p * (g - <g, p>) per segment; untouched columns pass through
                let p = &node.value;
                let mut d = g.clone();
                for (r, mut drow) in d.rows_mut().into_iter().enumerate() {
                    for &(a, b) in segs {
                        let dot: f64 = (a..b).map(|j| g[[r, j]] * p[[r, j]]).sum();
                        for j in a..b {
                            drow[j] = p[[r, j]] * (g[[r, j]] - dot);
                        }
                    }
                }
                acc(*x, d);
            }
            Op::LogSoftmax(x, segs) => {
                let lp = &node.value;
                let mut d = g.clone();
                for (r, mut drow) in d.rows_mut().into_iter().enumerate() {
                    for &(a, b) in segs {
                        let gsum: f64 = (a..b).map(|j| g[[r, j]]).sum();
                        for j in a..b {
                            drow[j] = g[[r, j]] - lp[[r, j]].exp() * gsum;
                        }
                    }
                }
                acc(*x, d);
            }
            Op::StraightThrough(soft) => acc(*soft, g.clone()),
            Op::Nll(logp, labels) => {
                let mut d = Matrix::zeros(self.shape(*logp));
                let scale = g[[0, 0]] / labels.len() as f64;
                for (r, &l) in labels.iter().enumerate() {
                    d[[r, l]] = -scale;
                }
                acc(*logp, d);
            }
            Op::Msre(pred, target) => {
                let scale = g[[0, 0]] / target.nrows() as f64;
                let mut d = Matrix::zeros(target.dim());
                Zip::from(&mut d)
                    .and(self.value(*pred))
                    .and(target)
                    .for_each(|d, &yh, &y| *d = scale * -2.0 * (1.0 - yh / y) / y);
                acc(*pred, d);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = self.value(*gamma).row(0).to_owned();
                if self.rg(*gamma) {
                    acc(*gamma, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.rg(*beta) {
                    acc(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.rg(*x) {
                    let n = g.nrows() as f64;
                    let dxhat = g * &gam;
                    let sum_d = dxhat.sum_axis(Axis(0));
                    let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                    let dx = (&dxhat * n - &sum_d - xhat * &sum_dx) * inv_std / n;
                    acc(*x, dx);
                }
            }
        }
    }
}

pub fn softmax_in_place(mut seg: ndarray::ArrayViewMut1<f64>) {
    let m = seg.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    seg.mapv_inplace(|v| (v - m).exp());
    let s = seg.sum();
    seg.mapv_inplace(|v| v / s);
}

/// Softmax of a plain slice.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut a = Array1::from(x.to_vec());
    softmax_in_place(a.view_mut());
    a.to_vec()
}

/// The whole row as one segment.
pub fn full_segment(cols: usize) -> Segments {
    vec![(0, cols)]
}

/// Consecutive segments of the given sizes.
pub fn segments_from_sizes(sizes: &[usize]) -> Segments {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let seg = (start, start + s);
            start += s;
            seg
        })
        .collect()
}

/// `n` equal consecutive segments of width `w`.
pub fn uniform_segments(n: usize, w: usize) -> Segments {
    (0..n).map(|i| (i * w, (i + 1) * w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(array![[-1.0, 0.0, 2.0]]);
        let y = t.relu(x);
        assert_eq!(t.value(y), &array![[0.0, 0.0, 2.0]]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn segmented_softmax_rows_sum_to_one_per_segment() {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0, -3.0, 2.0, 0.5, 9.0]]);
        let y = t.softmax(x, vec![(0, 2), (2, 5)]).unwrap();
        let v = t.value(y);
        assert!((v[[0, 0]] + v[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((v[[0, 2]] + v[[0, 3]] + v[[0, 4]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_shape_mismatch_is_an_error() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros((2, 3)));
        let b = t.constant(Matrix::zeros((2, 3)));
        assert!(matches!(t.matmul(a, b), Err(Error::Shape(_))));
        assert!(t.add(a, b).is_ok());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let w = t.param(array![[2.0]]);
        let c = t.constant(array![[3.0]]);
        let y = t.mul(w, c).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap()[[0, 0]], 3.0);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn straight_through_is_one_hot_forward() {
        let mut t = Tape::new();
        let x = t.param(array![[0.2, 0.5, 0.3, 0.9, 0.1]]);
        let y = t.straight_through(x, &vec![(0, 3), (3, 5)]).unwrap();
        assert_eq!(t.value(y), &array![[0.0, 1.0, 0.0, 1.0, 0.0]]);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Matrix::ones((1, 5)));
    }

    #[test]
    fn nll_rejects_out_of_range_label() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros((1, 3)));
        assert!(t.nll(x, vec![3]).is_err());
    }

    #[test]
    fn msre_rejects_non_positive_targets() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros((1, 2)));
        assert!(t.msre(x, array![[1.0, 0.0]]).is_err());
    }
}
