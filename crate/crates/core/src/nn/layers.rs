//! Parameter storage and the layer types the evaluator and supernet are
//! built from.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

/// Per-forward binding of a [`ParamSet`] onto a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Binding over caller-created nodes, in [`ParamSet`] order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    /// Binds every tensor as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|v| tape.param(v.clone())).collect(),
        }
    }

    /// Binds every tensor as a constant (frozen model).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|v| tape.constant(v.clone())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform matrix in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit))
}

/// Fully connected layer `y = x W + b`, with `W` stored `in x out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), glorot_uniform(rng, fan_in, fan_out));
        let bias = params.add(format!("{name}.bias"), Matrix::zeros((1, fan_out)));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, bound.var(self.weight))?;
        tape.add_row(xw, bound.var(self.bias))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Batch statistics gathered during a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub batch: usize,
}

impl BatchNorm {
    pub fn new(params: &mut ParamSet, name: &str, width: usize) -> Self {
        let gamma = params.add(format!("{name}.gamma"), Matrix::ones((1, width)));
        let beta = params.add(format!("{name}.beta"), Matrix::zeros((1, width)));
        Self {
            gamma,
            beta,
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        mode: Mode,
    ) -> Result<(Var, Option<BnStats>)> {
        let gamma = bound.var(self.gamma);
        let beta = bound.var(self.beta);
        match mode {
            Mode::Train => {
                let batch = tape.shape(x).0;
                let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, self.eps)?;
                Ok((y, Some(BnStats { mean, var, batch })))
            }
            Mode::Eval => {
                let width = self.running_mean.len();
                if tape.shape(x).1 != width {
                    return Err(Error::Shape(format!(
                        "batch norm expects {width} features, got {}",
                        tape.shape(x).1
                    )));
                }
                let shift = tape.constant(
                    (-&self.running_mean)
                        .into_shape_with_order((1, width))
                        .expect("row shape"),
                );
                let inv_std = tape.constant(
                    self.running_var
                        .mapv(|v| 1.0 / (v + self.eps).sqrt())
                        .into_shape_with_order((1, width))
                        .expect("row shape"),
                );
                let centered = tape.add_row(x, shift)?;
                let normed = tape.mul_row(centered, inv_std)?;
                let scaled = tape.mul_row(normed, gamma)?;
                Ok((tape.add_row(scaled, beta)?, None))
            }
        }
    }

    /// Folds batch statistics into the running estimates (unbiased variance).
    pub fn update_running(&mut self, stats: &BnStats) {
        let m = self.momentum;
        let n = stats.batch as f64;
        let unbiased = if stats.batch > 1 {
            &stats.var * (n / (n - 1.0))
        } else {
            stats.var.clone()
        };
        self.running_mean = &self.running_mean * (1.0 - m) + &stats.mean * m;
        self.running_var = &self.running_var * (1.0 - m) + unbiased * m;
    }
}

/// Five dense layers with ReLU, skip connections 1→3 and 2→4, and optional
/// batch normalization after each hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualMlp {
    pub params: ParamSet,
    pub layers: Vec<Dense>,
    pub norms: Vec<BatchNorm>,
    pub input_dim: usize,
    pub width: usize,
    pub output_dim: usize,
}

/// Output of a [`ResidualMlp`] forward pass.
#[derive(Debug)]
pub struct MlpForward {
    pub bound: Bound,
    pub output: Var,
    pub bn_stats: Vec<BnStats>,
}

impl ResidualMlp {
    pub const DEPTH: usize = 5;

    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        width: usize,
        output_dim: usize,
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        let mut params = ParamSet::new();
        let mut layers = Vec::with_capacity(Self::DEPTH);
        let mut norms = Vec::new();
        for i in 0..Self::DEPTH {
            let fan_in = if i == 0 { input_dim } else { width };
            let fan_out = if i + 1 == Self::DEPTH { output_dim } else { width };
            layers.push(Dense::new(&mut params, &format!("fc{i}"), fan_in, fan_out, rng));
            if batch_norm && i + 1 < Self::DEPTH {
                norms.push(BatchNorm::new(&mut params, &format!("bn{i}"), width));
            }
        }
        Self {
            params,
            layers,
            norms,
            input_dim,
            width,
            output_dim,
        }
    }

    pub fn has_batch_norm(&self) -> bool {
        !self.norms.is_empty()
    }

    /// Runs the network on `x` (rows = samples). Parameters are bound as
    /// gradient-tracking leaves unless `frozen`.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode, frozen: bool) -> Result<MlpForward> {
        if tape.shape(x).1 != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                tape.shape(x).1
            )));
        }
        let bound = if frozen {
            self.params.bind_frozen(tape)
        } else {
            self.params.bind(tape)
        };
        self.forward_with(tape, bound, x, mode)
    }

    /// Forward pass over an existing parameter binding.
    pub fn forward_with(&self, tape: &mut Tape, bound: Bound, x: Var, mode: Mode) -> Result<MlpForward> {
        if bound.vars.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "binding has {} tensors, network has {}",
                bound.vars.len(),
                self.params.len()
            )));
        }
        let mut stats = Vec::new();
        let mut hidden: Vec<Var> = Vec::with_capacity(Self::DEPTH - 1);
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(tape, &bound, h)?;
            if i + 1 == Self::DEPTH {
                return Ok(MlpForward {
                    bound,
                    output: z,
                    bn_stats: stats,
                });
            }
            if let Some(bn) = self.norms.get(i) {
                let (y, s) = bn.forward(tape, &bound, z, mode)?;
                z = y;
                stats.extend(s);
            }
            let mut a = tape.relu(z);
            if i >= 2 {
                a = tape.add(a, hidden[i - 2])?;
            }
            hidden.push(a);
            h = a;
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn apply_bn_stats(&mut self, stats: &[BnStats]) {
        for (bn, s) in self.norms.iter_mut().zip(stats) {
            bn.update_running(s);
        }
    }

    /// Tape-free inference in eval mode.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        let mut hidden: Vec<Matrix> = Vec::with_capacity(Self::DEPTH - 1);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&h, self.params.get(layer.weight));
            z += self.params.get(layer.bias);
            if i + 1 == Self::DEPTH {
                return Ok(z);
            }
            if let Some(bn) = self.norms.get(i) {
                let inv = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                let scale = &self.params.get(bn.gamma).row(0) * &inv;
                let shift = &self.params.get(bn.beta).row(0) - &(&bn.running_mean * &scale);
                z *= &scale;
                z += &shift;
            }
            z.mapv_inplace(|v| v.max(0.0));
            if i >= 2 {
                z += &hidden[i - 2];
            }
            hidden.push(z.clone());
            h = z;
        }
        unreachable!("loop returns at the last layer")
    }
}

/// `x @ w`. A few rows are accumulated row by row, which avoids the packing
/// overhead of a general product and dominates single-network inference.
fn matmul(x: &Matrix, w: &Matrix) -> Matrix {
    if x.nrows() > 4 {
        return x.dot(w);
    }
    let mut z = Matrix::zeros((x.nrows(), w.ncols()));
    for (xr, mut zr) in x.rows().into_iter().zip(z.rows_mut()) {
        for (&xi, wr) in xr.iter().zip(w.rows()) {
            if xi != 0.0 {
                zr.scaled_add(xi, &wr);
            }
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(&mut rng, 10, 20);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn residual_add_with_zero_is_identity() {
        let mut t = Tape::new();
        let x = t.constant(ndarray::array![[1.0, -2.0]]);
        let z = t.constant(Matrix::zeros((1, 2)));
        let y = t.add(x, z).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn predict_matches_tape_forward_in_eval_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = ResidualMlp::new(6, 8, 3, true, &mut rng);
        for bn in &mut net.norms {
            bn.running_mean.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            bn.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
        }
        let x = Matrix::from_shape_fn((5, 6), |_| rng.random_range(-1.0..1.0));
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let out = net.forward(&mut t, xv, Mode::Eval, true).unwrap();
        let direct = net.predict(&x).unwrap();
        let diff = (t.value(out.output) - &direct).mapv(f64::abs).sum();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn eval_mode_uses_running_stats_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = ResidualMlp::new(4, 8, 2, true, &mut rng);
        let x = Matrix::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let single = net.predict(&x.slice(ndarray::s![0..1, ..]).to_owned()).unwrap();
        let batch = net.predict(&x).unwrap();
        assert_eq!(single.row(0), batch.row(0));
    }

    #[test]
    fn running_variance_stays_non_negative() {
        let mut p = ParamSet::new();
        let mut bn = BatchNorm::new(&mut p, "bn", 3);
        for _ in 0..20 {
            bn.update_running(&BnStats {
                mean: Array1::from(vec![1.0, 2.0, 3.0]),
                var: Array1::from(vec![0.0, 0.5, 4.0]),
                batch: 8,
            });
        }
        assert!(bn.running_var.iter().all(|&v| v >= 0.0));
    }
}
