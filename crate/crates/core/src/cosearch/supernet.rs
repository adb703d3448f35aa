//! Toy supernet: a linear stem over projected features, `L` residual
//! positions that mix the candidate ops by their relaxed weights, and a
//! linear classifier.
//!
//! Each MBConv candidate is stood in for by a two-layer MLP whose hidden
//! width grows with kernel size and expansion, so heavier ops buy more task
//! capacity. Zero contributes nothing and leaves only the skip path.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::{gumbel_softmax, sample_gumbel};
use crate::nn::tape::{full_segment, uniform_segments};
use crate::nn::{Bound, Dense, Matrix, ParamSet, Segments, Tape, Var};
use crate::workload::{argmax, ArchEncoding, CandidateOp, NUM_OPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// Per-position Gumbel softmax.
    Soft,
    /// One-hot forward value, soft gradient.
    StraightThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuperNetConfig {
    pub width: usize,
    /// Hidden width of each non-Zero candidate, in canonical op order.
    pub hidden: [usize; NUM_OPS - 1],
}

impl Default for SuperNetConfig {
    fn default() -> Self {
        Self {
            width: 16,
            hidden: [3, 6, 5, 10, 7, 14],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpBlock {
    pub expand: Dense,
    pub project: Dense,
}

impl OpBlock {
    fn forward(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        let a = self.expand.forward(tape, bound, h)?;
        let a = tape.relu(a);
        self.project.forward(tape, bound, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperNet {
    pub config: SuperNetConfig,
    /// Task weights `w`.
    pub params: ParamSet,
    pub stem: Dense,
    /// `positions x NUM_OPS`; `None` for Zero.
    pub ops: Vec<Vec<Option<OpBlock>>>,
    pub head: Dense,
    /// Architecture logits, `positions x NUM_OPS`.
    pub alpha: Matrix,
}

impl SuperNet {
    pub fn new(
        positions: usize,
        features: usize,
        classes: usize,
        cfg: &SuperNetConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if positions == 0 || features == 0 || classes < 2 || cfg.width == 0 || cfg.hidden.contains(&0) {
            return Err(Error::InvalidArgument("supernet dimensions must be positive".into()));
        }
        let mut params = ParamSet::new();
        let stem = Dense::new(&mut params, "stem", features, cfg.width, rng);
        let mut ops = Vec::with_capacity(positions);
        for l in 0..positions {
            let mut row = Vec::with_capacity(NUM_OPS);
            for (j, op) in CandidateOp::ALL.iter().enumerate() {
                if op.is_zero() {
                    row.push(None);
                    continue;
                }
                let name = format!("pos{l}.{}", op.name());
                let hidden = cfg.hidden[j];
                row.push(Some(OpBlock {
                    expand: Dense::new(&mut params, &format!("{name}.expand"), cfg.width, hidden, rng),
                    project: Dense::new(&mut params, &format!("{name}.project"), hidden, cfg.width, rng),
                }));
            }
            ops.push(row);
        }
        let head = Dense::new(&mut params, "head", cfg.width, classes, rng);
        Ok(Self {
            config: cfg.clone(),
            params,
            stem,
            ops,
            head,
            alpha: Matrix::zeros((positions, NUM_OPS)),
        })
    }

    pub fn positions(&self) -> usize {
        self.ops.len()
    }

    pub fn segments(&self) -> Segments {
        uniform_segments(self.positions(), NUM_OPS)
    }

    /// `alpha` as a `1 x (positions * NUM_OPS)` row, the layout the evaluator
    /// consumes.
    pub fn alpha_row(&self) -> Matrix {
        let n = self.alpha.len();
        self.alpha.clone().into_shape_with_order((1, n)).expect("contiguous")
    }

    pub fn set_alpha_row(&mut self, row: &Matrix) -> Result<()> {
        if row.len() != self.alpha.len() {
            return Err(Error::Shape(format!("alpha row has {} entries, expected {}", row.len(), self.alpha.len())));
        }
        self.alpha = row.clone().into_shape_with_order(self.alpha.dim()).expect("contiguous");
        Ok(())
    }

    /// Relaxed encoding of `alpha` on the tape, `1 x (positions * NUM_OPS)`.
    pub fn relaxed(&self, tape: &mut Tape, alpha: Var, tau: f64, noise: Option<&Matrix>, mode: Relaxation) -> Result<Var> {
        gumbel_softmax(tape, alpha, tau, noise, &self.segments(), mode == Relaxation::StraightThrough)
    }

    fn stem_forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.stem.forward(tape, bound, x)
    }

    /// Class logits with every position a `probs`-weighted mixture of its ops.
    pub fn logits(&self, tape: &mut Tape, bound: &Bound, x: Var, probs: Var) -> Result<Var> {
        let expect = (1, self.alpha.len());
        if tape.shape(probs) != expect {
            return Err(Error::Shape(format!("op weights have shape {:?}, expected {expect:?}", tape.shape(probs))));
        }
        let mut h = self.stem_forward(tape, bound, x)?;
        for (l, row) in self.ops.iter().enumerate() {
            let mut next = h;
            for (j, block) in row.iter().enumerate() {
                let Some(block) = block else { continue };
                let out = block.forward(tape, bound, h)?;
                let col = l * NUM_OPS + j;
                let p = tape.slice_cols(probs, col, col + 1)?;
                let weighted = tape.mul_scalar(out, p)?;
                next = tape.add(next, weighted)?;
            }
            h = next;
        }
        self.head.forward(tape, bound, h)
    }

    /// Class logits of the discrete network that keeps only `arch`'s ops.
    pub fn logits_fixed(&self, tape: &mut Tape, bound: &Bound, x: Var, arch: &[CandidateOp]) -> Result<Var> {
        if arch.len() != self.positions() {
            return Err(Error::Shape(format!("architecture has {} positions, supernet {}", arch.len(), self.positions())));
        }
        let mut h = self.stem_forward(tape, bound, x)?;
        for (row, op) in self.ops.iter().zip(arch) {
            if let Some(block) = &row[op.index()] {
                let out = block.forward(tape, bound, h)?;
                h = tape.add(h, out)?;
            }
        }
        self.head.forward(tape, bound, h)
    }

    /// `Σ ‖W‖²` over every task weight and bias.
    pub fn weight_norm(&self, tape: &mut Tape, bound: &Bound) -> Result<Var> {
        let mut total: Option<Var> = None;
        for &v in bound.vars() {
            let s = tape.sum_squares(v);
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        total.ok_or_else(|| Error::Empty("supernet has no task weights".into()))
    }

    /// Per-position argmax of `alpha`.
    pub fn derived_arch(&self) -> Vec<CandidateOp> {
        self.alpha
            .rows()
            .into_iter()
            .map(|r| CandidateOp::ALL[argmax(&r.to_vec())])
            .collect()
    }

    /// Accuracy (percent) of the discrete network on `x`, `y`.
    pub fn accuracy_fixed(&self, x: &Matrix, y: &[usize], arch: &[CandidateOp]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let logits = self.logits_fixed(&mut tape, &bound, xv, arch)?;
        Ok(accuracy(tape.value(logits), y))
    }
}

/// Percentage of rows whose argmax matches the label.
pub fn accuracy(logits: &Matrix, y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let hits = logits
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(r, &l)| argmax(&r.to_vec()) == l)
        .count();
    100.0 * hits as f64 / y.len() as f64
}

/// Mean cross-entropy of `logits` against `labels`, optionally label-smoothed.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize], smoothing: f64) -> Result<Var> {
    let (_, classes) = tape.shape(logits);
    let logp = tape.log_softmax(logits, full_segment(classes))?;
    let nll = tape.nll(logp, labels.to_vec())?;
    if smoothing == 0.0 {
        return Ok(nll);
    }
    let uniform = tape.mean(logp);
    let uniform = tape.scale(uniform, -smoothing);
    let hard = tape.scale(nll, 1.0 - smoothing);
    tape.add(hard, uniform)
}

/// Relaxed architecture encoding of `alpha` (`positions x NUM_OPS`) sampled
/// with fresh Gumbel noise. Straight-through returns the one-hot forward
/// value.
pub fn relaxed_arch_encoding<R: Rng + ?Sized>(
    alpha: &Matrix,
    mode: Relaxation,
    tau: f64,
    rng: &mut R,
) -> Result<ArchEncoding> {
    let (positions, ops) = alpha.dim();
    if ops != NUM_OPS {
        return Err(Error::Shape(format!("alpha has {ops} columns, expected {NUM_OPS}")));
    }
    let flat = alpha.clone().into_shape_with_order((1, positions * NUM_OPS)).expect("contiguous");
    let noise = sample_gumbel(rng, flat.dim());
    let mut tape = Tape::new();
    let a = tape.constant(flat);
    let p = gumbel_softmax(
        &mut tape,
        a,
        tau,
        Some(&noise),
        &uniform_segments(positions, NUM_OPS),
        mode == Relaxation::StraightThrough,
    )?;
    ArchEncoding::from_flat(tape.value(p).as_slice().expect("contiguous"), positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn dominant_logit_saturates() {
        let mut alpha = Matrix::zeros((6, NUM_OPS));
        for l in 0..6 {
            alpha[[l, l % NUM_OPS]] = 20.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = relaxed_arch_encoding(&alpha, Relaxation::Soft, 0.5, &mut rng).unwrap();
        for (l, row) in enc.rows().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let target = if j == l % NUM_OPS { 1.0 } else { 0.0 };
                assert!((v - target).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let alpha = Matrix::from_shape_fn((6, NUM_OPS), |_| rng.random_range(-3.0..3.0));
            for mode in [Relaxation::Soft, Relaxation::StraightThrough] {
                let enc = relaxed_arch_encoding(&alpha, mode, 1.0, &mut rng).unwrap();
                for row in enc.rows() {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn one_hot_mixture_equals_fixed_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = SuperNet::new(3, 8, 4, &SuperNetConfig::default(), &mut rng).unwrap();
        let arch = [CandidateOp::ALL[1], CandidateOp::Zero, CandidateOp::ALL[5]];
        let mut probs = Matrix::zeros((1, 3 * NUM_OPS));
        for (l, op) in arch.iter().enumerate() {
            probs[[0, l * NUM_OPS + op.index()]] = 1.0;
        }
        let x = Matrix::from_shape_fn((5, 8), |_| rng.random_range(-1.0..1.0));
        let mut tape = Tape::new();
        let bound = net.params.bind_frozen(&mut tape);
        let xv = tape.constant(x);
        let pv = tape.constant(probs);
        let mixed = net.logits(&mut tape, &bound, xv, pv).unwrap();
        let fixed = net.logits_fixed(&mut tape, &bound, xv, &arch).unwrap();
        for (a, b) in tape.value(mixed).iter().zip(tape.value(fixed)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_zero_is_plain_ce() {
        let mut tape = Tape::new();
        let l = tape.constant(ndarray::array![[1.0, 0.0, -1.0], [0.5, 0.5, 2.0]]);
        let plain = cross_entropy(&mut tape, l, &[0, 2], 0.0).unwrap();
        let smooth = cross_entropy(&mut tape, l, &[0, 2], 0.1).unwrap();
        let expect = (crate::nn::loss::ce_loss(&[1.0, 0.0, -1.0], 0).unwrap()
            + crate::nn::loss::ce_loss(&[0.5, 0.5, 2.0], 2).unwrap())
            / 2.0;
        assert!((tape.scalar(plain) - expect).abs() < 1e-12);
        assert!(tape.scalar(smooth) > tape.scalar(plain));
    }
}
