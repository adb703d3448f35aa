//! Gradient-based co-search: alternating task-weight and architecture steps
//! with the hardware cost supplied by the frozen evaluator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::supernet::{cross_entropy, Relaxation, SuperNet, SuperNetConfig};
use super::task::{Samples, ToyTask};
use crate::costmodel::Dataflow;
use crate::error::{Error, Result};
use crate::evaluator::{EvaluatorModel, NoiseSource};
use crate::nn::loss::{annealed_tau, gumbel_softmax, sample_gumbel};
use crate::nn::tape::full_segment;
use crate::nn::{LrSchedule, Matrix, Mode, Optimizer, OptimizerConfig, Tape, Var};
use crate::objective::CostFunctionSpec;
use crate::workload::{argmax, CandidateOp, NUM_OPS};

/// How the hardware term enters the architecture loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// `CE + λ₁‖w‖² + λ₂·Cost_HW`.
    Dance,
    /// `λ₂·CE·latency`.
    EddOriginal,
    /// Additive form with only the PE counts searched.
    EddFixed,
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossVariant::Dance => "dance",
            LossVariant::EddOriginal => "edd_original",
            LossVariant::EddFixed => "edd_fixed",
        })
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dance" => Ok(LossVariant::Dance),
            "edd_original" => Ok(LossVariant::EddOriginal),
            "edd_fixed" => Ok(LossVariant::EddFixed),
            other => Err(Error::Parse(format!("unknown loss variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupShape {
    Step,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmupConfig {
    /// Defaults to a third of the search epochs.
    pub epochs_small: Option<usize>,
    pub lambda2_small: f64,
    pub shape: WarmupShape,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            epochs_small: None,
            lambda2_small: 0.0,
            shape: WarmupShape::Step,
        }
    }
}

/// Gumbel noise fed to the evaluator's hardware generator during search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvalNoise {
    /// Fresh noise on every forward pass.
    Resample,
    /// One draw from `seed`, reused for the whole run.
    Fixed { seed: u64 },
    /// `g = 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub warmup: Option<WarmupConfig>,
    pub epochs: usize,
    pub batch_size: usize,
    pub w_optimizer: OptimizerConfig,
    pub w_schedule: LrSchedule,
    pub alpha_optimizer: OptimizerConfig,
    pub tau_start: f64,
    pub tau_end: f64,
    pub relaxation: Relaxation,
    pub cost_fn: CostFunctionSpec,
    pub variant: LossVariant,
    pub eval_noise: EvalNoise,
    pub label_smoothing: f64,
    pub supernet: SuperNetConfig,
    /// Dataflow and RF held fixed while `edd_fixed` searches PE counts.
    pub edd_dataflow: Dataflow,
    pub edd_rf: u32,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lambda1: 1e-4,
            lambda2: 0.0,
            warmup: Some(WarmupConfig::default()),
            epochs: 30,
            batch_size: 64,
            w_optimizer: OptimizerConfig::sgd(0.05, 0.9),
            w_schedule: LrSchedule::Cosine {
                lr0: 0.05,
                total_epochs: 30,
            },
            alpha_optimizer: OptimizerConfig::adam(0.02),
            tau_start: 5.0,
            tau_end: 0.5,
            relaxation: Relaxation::Soft,
            cost_fn: CostFunctionSpec::Edap,
            variant: LossVariant::Dance,
            eval_noise: EvalNoise::Resample,
            label_smoothing: 0.0,
            supernet: SuperNetConfig::default(),
            edd_dataflow: Dataflow::WeightStationary,
            edd_rf: 16,
            seed: 0,
        }
    }
}

impl SearchConfig {
    /// Sets the epoch count and rescales an epoch-indexed LR schedule with it.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        match &mut self.w_schedule {
            LrSchedule::Cosine { total_epochs, .. } => *total_epochs = epochs,
            LrSchedule::StepDecay { every, .. } => *every = (epochs / 3).max(1),
            LrSchedule::Constant { .. } => {}
        }
        self
    }

    pub fn warmup_epochs(&self) -> usize {
        match &self.warmup {
            Some(w) => w.epochs_small.unwrap_or(self.epochs / 3),
            None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("search needs at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(w) = &self.warmup {
            if !(w.lambda2_small >= 0.0) || w.lambda2_small > self.lambda2 {
                return Err(Error::InvalidArgument(format!(
                    "warm-up lambda2 {} must lie in [0, {}]",
                    w.lambda2_small, self.lambda2
                )));
            }
            if self.warmup_epochs() >= self.epochs {
                return Err(Error::InvalidArgument(format!(
                    "warm-up lasts {} epochs but the search has {}",
                    self.warmup_epochs(),
                    self.epochs
                )));
            }
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0) {
            return Err(Error::InvalidArgument("gumbel temperatures must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument(format!(
                "label smoothing must be in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        self.cost_fn.validate()?;
        self.w_optimizer.validate()?;
        self.alpha_optimizer.validate()
    }
}

/// `λ₂` in effect at `epoch`.
pub fn warmup_lambda2(epoch: usize, cfg: &SearchConfig) -> f64 {
    let Some(w) = &cfg.warmup else {
        return cfg.lambda2;
    };
    let small = cfg.warmup_epochs();
    if epoch >= small {
        return cfg.lambda2;
    }
    match w.shape {
        WarmupShape::Step => w.lambda2_small,
        WarmupShape::Linear => w.lambda2_small + (cfg.lambda2 - w.lambda2_small) * epoch as f64 / small as f64,
    }
}

/// `Cost_HW` of a `rows x 3` cost node.
pub fn cost_hw_graph(tape: &mut Tape, costs: Var, spec: &CostFunctionSpec) -> Result<Var> {
    let (rows, cols) = tape.shape(costs);
    if cols != 3 {
        return Err(Error::Shape(format!("cost node has {cols} columns, expected 3")));
    }
    match *spec {
        CostFunctionSpec::Linear {
            lambda_latency,
            lambda_energy,
            lambda_area,
        } => {
            let w = tape.constant(ndarray::array![[lambda_latency, lambda_energy, lambda_area]]);
            let weighted = tape.mul_row(costs, w)?;
            let s = tape.sum(weighted);
            Ok(tape.scale(s, 1.0 / rows as f64))
        }
        CostFunctionSpec::Edap => {
            let l = tape.slice_cols(costs, 0, 1)?;
            let e = tape.slice_cols(costs, 1, 2)?;
            let a = tape.slice_cols(costs, 2, 3)?;
            let le = tape.mul(l, e)?;
            let lea = tape.mul(le, a)?;
            let s = tape.sum(lea);
            Ok(tape.scale(s, 1.0 / rows as f64))
        }
    }
}

/// One row of the per-epoch search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    /// Mean CE over the architecture steps.
    pub ce: f64,
    /// Mean surrogate `Cost_HW` of the relaxed encodings; absent without an
    /// evaluator.
    pub cost_hw: Option<f64>,
    pub lambda2: f64,
    pub tau: f64,
    pub argmax: Vec<CandidateOp>,
}

pub const TRACE_HEADER_PREFIX: &str = "epoch,ce,cost_hw,lambda2,tau";

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let positions = trace.first().map_or(0, |r| r.argmax.len());
    let mut out = String::from(TRACE_HEADER_PREFIX);
    for l in 0..positions {
        out.push_str(&format!(",pos{l}"));
    }
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{:.9e},{},{:.9e},{:.6}",
            r.epoch,
            r.ce,
            r.cost_hw.map(|c| format!("{c:.9e}")).unwrap_or_default(),
            r.lambda2,
            r.tau
        ));
        for op in &r.argmax {
            out.push(',');
            out.push_str(op.name());
        }
        out.push('\n');
    }
    out
}

/// `epoch,position,<op logits...>` for every traced `alpha`.
pub fn alpha_csv(alpha_trace: &[Matrix]) -> String {
    let mut out = String::from("epoch,position");
    for op in CandidateOp::ALL {
        out.push(',');
        out.push_str(op.name());
    }
    out.push('\n');
    for (epoch, alpha) in alpha_trace.iter().enumerate() {
        for (l, row) in alpha.rows().into_iter().enumerate() {
            out.push_str(&format!("{epoch},{l}"));
            for v in row {
                out.push_str(&format!(",{v:.9e}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Learned PE-count logits of an `edd_fixed` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeLogits {
    pub pe_x: Vec<f64>,
    pub pe_y: Vec<f64>,
    pub pe_x_value: u32,
    pub pe_y_value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub final_arch: Vec<CandidateOp>,
    /// `alpha` after every epoch.
    pub alpha_trace: Vec<Matrix>,
    pub trace: Vec<TraceRow>,
    pub pe_logits: Option<PeLogits>,
    pub supernet: SuperNet,
}

impl SearchResult {
    pub fn zero_positions(&self) -> usize {
        self.final_arch.iter().filter(|op| op.is_zero()).count()
    }
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

const STREAM_INIT: u64 = 0;
const STREAM_ARCH_NOISE: u64 = 1;
const STREAM_EVAL_NOISE: u64 = 2;
const STREAM_SHUFFLE_BASE: u64 = 16;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct PeSearch {
    logits: Vec<Matrix>,
    opt: Optimizer,
    fixed_df: Matrix,
    fixed_rf: Matrix,
}

/// Hardware and cost terms of one architecture step.
struct HwTerm {
    cost_hw: Var,
    latency: Var,
    pe_vars: Vec<Var>,
}

struct Context<'a> {
    evaluator: Option<&'a EvaluatorModel>,
    cfg: &'a SearchConfig,
    eval_rng: ChaCha8Rng,
    fixed_noise: Option<Matrix>,
    pe: Option<PeSearch>,
}

impl Context<'_> {
    fn hw_term(&mut self, tape: &mut Tape, probs: Var, tau: f64) -> Result<Option<HwTerm>> {
        let Some(model) = self.evaluator else {
            return Ok(None);
        };
        let costs = match self.cfg.variant {
            LossVariant::Dance | LossVariant::EddOriginal => {
                let noise = match self.cfg.eval_noise {
                    EvalNoise::Zero => NoiseSource::Zero,
                    EvalNoise::Fixed { .. } => NoiseSource::Fixed(self.fixed_noise.as_ref().expect("drawn")),
                    EvalNoise::Resample => NoiseSource::Sampled(&mut self.eval_rng),
                };
                (model.cost_graph(tape, probs, noise)?, Vec::new())
            }
            LossVariant::EddFixed => {
                let pe = self.pe.as_ref().expect("pe search state");
                let mut fixed_rng = match self.cfg.eval_noise {
                    EvalNoise::Fixed { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
                    _ => None,
                };
                let noises: Vec<Option<Matrix>> = pe
                    .logits
                    .iter()
                    .map(|m| match (self.cfg.eval_noise, fixed_rng.as_mut()) {
                        (EvalNoise::Zero, _) => None,
                        (_, Some(r)) => Some(sample_gumbel(r, m.dim())),
                        (_, None) => Some(sample_gumbel(&mut self.eval_rng, m.dim())),
                    })
                    .collect();
                let df = tape.constant(pe.fixed_df.clone());
                let rf = tape.constant(pe.fixed_rf.clone());
                let mut vars = Vec::new();
                let mut heads = Vec::new();
                for (m, n) in pe.logits.iter().zip(&noises) {
                    let v = tape.param(m.clone());
                    vars.push(v);
                    heads.push(gumbel_softmax(tape, v, tau, n.as_ref(), &full_segment(m.ncols()), false)?);
                }
                let input = tape.concat_cols(&[probs, df, heads[0], heads[1], rf])?;
                (model.costest.costs(tape, input, Mode::Eval, true)?.0, vars)
            }
        };
        let (costs, pe_vars) = costs;
        let cost_hw = cost_hw_graph(tape, costs, &self.cfg.cost_fn)?;
        let latency = tape.slice_cols(costs, 0, 1)?;
        Ok(Some(HwTerm {
            cost_hw,
            latency,
            pe_vars,
        }))
    }
}

fn diverged(epoch: usize, step: usize, what: &str) -> Error {
    Error::NonFinite(format!("search diverged at epoch {epoch}, step {step}: {what}"))
}

/// Runs the co-search. `on_epoch` sees every trace row as soon as it is
/// complete, so a caller can persist progress before a divergence aborts.
pub fn search(
    task: &ToyTask,
    evaluator: Option<&EvaluatorModel>,
    cfg: &SearchConfig,
    positions: usize,
    mut on_epoch: impl FnMut(&TraceRow, &Matrix),
) -> Result<SearchResult> {
    cfg.validate()?;
    if let Some(model) = evaluator {
        if model.arch_space.positions != positions {
            return Err(Error::Shape(format!(
                "evaluator expects {} positions, search uses {positions}",
                model.arch_space.positions
            )));
        }
    }
    if cfg.variant != LossVariant::Dance && evaluator.is_none() {
        return Err(Error::InvalidArgument(format!("loss variant {} needs an evaluator", cfg.variant)));
    }
    let mut init_rng = seeded(cfg.seed, STREAM_INIT);
    let mut net = SuperNet::new(positions, task.features(), task.classes(), &cfg.supernet, &mut init_rng)?;
    let segs_len = positions * NUM_OPS;
    let mut arch_rng = seeded(cfg.seed, STREAM_ARCH_NOISE);
    let mut w_opt = Optimizer::new(cfg.w_optimizer.clone())?;
    let mut a_opt = Optimizer::new(cfg.alpha_optimizer.clone())?;

    let pe = match (cfg.variant, evaluator) {
        (LossVariant::EddFixed, Some(model)) => {
            if !model.costest.forwarding {
                return Err(Error::InvalidArgument("edd_fixed needs a forwarding cost-estimation net".into()));
            }
            let hw = &model.hw_space;
            let onehot = |vals: usize, idx: Option<usize>, what: &str| -> Result<Matrix> {
                let i = idx.ok_or_else(|| Error::InvalidArgument(format!("{what} is outside the hardware space")))?;
                let mut m = Matrix::zeros((1, vals));
                m[[0, i]] = 1.0;
                Ok(m)
            };
            Some(PeSearch {
                logits: vec![
                    Matrix::zeros((1, hw.pe_x_values.len())),
                    Matrix::zeros((1, hw.pe_y_values.len())),
                ],
                opt: Optimizer::new(cfg.alpha_optimizer.clone())?,
                fixed_df: onehot(
                    hw.dataflows.len(),
                    hw.dataflows.iter().position(|&d| d == cfg.edd_dataflow),
                    "edd dataflow",
                )?,
                fixed_rf: onehot(
                    hw.rf_values.len(),
                    hw.rf_values.iter().position(|&r| r == cfg.edd_rf),
                    "edd rf size",
                )?,
            })
        }
        _ => None,
    };
    let fixed_noise = match (cfg.eval_noise, evaluator) {
        (EvalNoise::Fixed { seed }, Some(model)) => {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            Some(sample_gumbel(&mut r, (1, model.hw_dim())))
        }
        _ => None,
    };
    let mut ctx = Context {
        evaluator,
        cfg,
        eval_rng: seeded(cfg.seed, STREAM_EVAL_NOISE),
        fixed_noise,
        pe,
    };

    let batch = cfg.batch_size;
    let n_train = task.train.len();
    let n_search = task.search.len();
    let steps = n_train.div_ceil(batch);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut alpha_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let tau = annealed_tau(cfg.tau_start, cfg.tau_end, epoch, cfg.epochs);
        let lambda2 = warmup_lambda2(epoch, cfg);
        w_opt.set_lr(cfg.w_schedule.lr(epoch));
        let train_order = shuffled(n_train, cfg.seed, STREAM_SHUFFLE_BASE + 2 * epoch as u64);
        let search_order = shuffled(n_search, cfg.seed, STREAM_SHUFFLE_BASE + 2 * epoch as u64 + 1);
        let mut ce_sum = 0.0;
        let mut cost_sum = 0.0;
        let mut cost_seen = false;

        for step in 0..steps {
            let lo = step * batch;
            let train_idx = &train_order[lo..(lo + batch).min(n_train)];
            let search_lo = (step * batch) % n_search;
            let search_idx: Vec<usize> = (0..batch.min(n_search))
                .map(|i| search_order[(search_lo + i) % n_search])
                .collect();

            // Task-weight step.
            let noise = sample_gumbel(&mut arch_rng, (1, segs_len));
            let b = task.train.batch(train_idx);
            let mut tape = Tape::new();
            let bound = net.params.bind(&mut tape);
            let a = tape.constant(net.alpha_row());
            let probs = net.relaxed(&mut tape, a, tau, Some(&noise), cfg.relaxation)?;
            let ce = task_ce(&net, &mut tape, &bound, &b, probs, cfg.label_smoothing)?;
            let loss = if cfg.lambda1 > 0.0 {
                let norm = net.weight_norm(&mut tape, &bound)?;
                let reg = tape.scale(norm, cfg.lambda1);
                tape.add(ce, reg)?
            } else {
                ce
            };
            if !tape.scalar(loss).is_finite() {
                return Err(diverged(epoch, step, "task loss"));
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Matrix> = bound
                .vars()
                .iter()
                .zip(net.params.values())
                .map(|(v, p)| grads.get_or_zeros(*v, p.dim()))
                .collect();
            w_opt
                .step(net.params.values_mut(), &g)
                .map_err(|e| diverged(epoch, step, &e.to_string()))?;

            // Architecture step on held-out data.
            let noise = sample_gumbel(&mut arch_rng, (1, segs_len));
            let b = task.search.batch(&search_idx);
            let mut tape = Tape::new();
            let bound = net.params.bind_frozen(&mut tape);
            let a = tape.param(net.alpha_row());
            let probs = net.relaxed(&mut tape, a, tau, Some(&noise), cfg.relaxation)?;
            let ce = task_ce(&net, &mut tape, &bound, &b, probs, cfg.label_smoothing)?;
            let hw = ctx.hw_term(&mut tape, probs, tau)?;
            let loss = match (&hw, cfg.variant) {
                (None, _) => ce,
                (Some(h), LossVariant::Dance | LossVariant::EddFixed) => {
                    let pen = tape.scale(h.cost_hw, lambda2);
                    tape.add(ce, pen)?
                }
                (Some(h), LossVariant::EddOriginal) => {
                    let prod = tape.mul(ce, h.latency)?;
                    tape.scale(prod, lambda2)
                }
            };
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(diverged(epoch, step, "architecture loss"));
            }
            ce_sum += tape.scalar(ce);
            if let Some(h) = &hw {
                cost_sum += tape.scalar(h.cost_hw);
                cost_seen = true;
            }
            let grads = tape.backward(loss)?;
            let ga = grads.get_or_zeros(a, (1, segs_len));
            let mut alpha = [net.alpha_row()];
            a_opt
                .step(&mut alpha, &[ga])
                .map_err(|e| diverged(epoch, step, &e.to_string()))?;
            net.set_alpha_row(&alpha[0])?;
            if let (Some(h), Some(pe)) = (&hw, ctx.pe.as_mut()) {
                let g: Vec<Matrix> = h
                    .pe_vars
                    .iter()
                    .zip(&pe.logits)
                    .map(|(v, m)| grads.get_or_zeros(*v, m.dim()))
                    .collect();
                pe.opt
                    .step(&mut pe.logits, &g)
                    .map_err(|e| diverged(epoch, step, &e.to_string()))?;
            }
        }
        if net.alpha.iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, steps, "alpha"));
        }
        let row = TraceRow {
            epoch,
            ce: ce_sum / steps as f64,
            cost_hw: cost_seen.then(|| cost_sum / steps as f64),
            lambda2,
            tau,
            argmax: net.derived_arch(),
        };
        on_epoch(&row, &net.alpha);
        trace.push(row);
        alpha_trace.push(net.alpha.clone());
    }

    let pe_logits = match (&ctx.pe, evaluator) {
        (Some(pe), Some(model)) => {
            let ix = argmax(pe.logits[0].as_slice().expect("contiguous"));
            let iy = argmax(pe.logits[1].as_slice().expect("contiguous"));
            Some(PeLogits {
                pe_x: pe.logits[0].iter().copied().collect(),
                pe_y: pe.logits[1].iter().copied().collect(),
                pe_x_value: model.hw_space.pe_x_values[ix],
                pe_y_value: model.hw_space.pe_y_values[iy],
            })
        }
        _ => None,
    };
    Ok(SearchResult {
        config: cfg.clone(),
        final_arch: net.derived_arch(),
        alpha_trace,
        trace,
        pe_logits,
        supernet: net,
    })
}

fn task_ce(
    net: &SuperNet,
    tape: &mut Tape,
    bound: &crate::nn::Bound,
    batch: &Samples,
    probs: Var,
    smoothing: f64,
) -> Result<Var> {
    let x = tape.constant(batch.x.clone());
    let logits = net.logits(tape, bound, x, probs)?;
    cross_entropy(tape, logits, &batch.y, smoothing)
}

/// Loss terms of one evaluation of the combined objective with both `w` and
/// `alpha` bound as trainable leaves, for inspecting gradient flow.
pub struct CombinedLoss {
    pub tape: Tape,
    pub w: Vec<Var>,
    pub alpha: Var,
    pub ce: Var,
    pub weight_reg: Var,
    pub cost_hw: Var,
    pub total: Var,
}

/// `CE + λ₁‖w‖² + λ₂·Cost_HW(evaluator(relaxed(alpha)))` on one batch with
/// the given Gumbel noise for the relaxation and frozen evaluator noise.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss(
    net: &SuperNet,
    batch: &Samples,
    evaluator: &EvaluatorModel,
    spec: &CostFunctionSpec,
    lambda1: f64,
    lambda2: f64,
    tau: f64,
    arch_noise: Option<&Matrix>,
    eval_noise: NoiseSource<'_>,
) -> Result<CombinedLoss> {
    let mut tape = Tape::new();
    let bound = net.params.bind(&mut tape);
    let alpha = tape.param(net.alpha_row());
    let probs = net.relaxed(&mut tape, alpha, tau, arch_noise, Relaxation::Soft)?;
    let ce = task_ce(net, &mut tape, &bound, batch, probs, 0.0)?;
    let norm = net.weight_norm(&mut tape, &bound)?;
    let weight_reg = tape.scale(norm, lambda1);
    let costs = evaluator.cost_graph(&mut tape, probs, eval_noise)?;
    let cost_hw = cost_hw_graph(&mut tape, costs, spec)?;
    let pen = tape.scale(cost_hw, lambda2);
    let t = tape.add(ce, weight_reg)?;
    let total = tape.add(t, pen)?;
    if !tape.scalar(total).is_finite() {
        return Err(Error::NonFinite(format!(
            "combined loss: ce {} reg {} cost {}",
            tape.scalar(ce),
            tape.scalar(weight_reg),
            tape.scalar(cost_hw)
        )));
    }
    Ok(CombinedLoss {
        w: bound.vars().to_vec(),
        tape,
        alpha,
        ce,
        weight_reg,
        cost_hw,
        total,
    })
}

/// `λ₂·CE·latency` on one batch, same conventions as [`combined_loss`].
#[allow(clippy::too_many_arguments)]
pub fn edd_loss(
    net: &SuperNet,
    batch: &Samples,
    evaluator: &EvaluatorModel,
    lambda2: f64,
    tau: f64,
    arch_noise: Option<&Matrix>,
    eval_noise: NoiseSource<'_>,
) -> Result<(Tape, Var, Var)> {
    let mut tape = Tape::new();
    let bound = net.params.bind(&mut tape);
    let alpha = tape.param(net.alpha_row());
    let probs = net.relaxed(&mut tape, alpha, tau, arch_noise, Relaxation::Soft)?;
    let ce = task_ce(net, &mut tape, &bound, batch, probs, 0.0)?;
    let costs = evaluator.cost_graph(&mut tape, probs, eval_noise)?;
    let latency = tape.slice_cols(costs, 0, 1)?;
    let prod = tape.mul(ce, latency)?;
    let loss = tape.scale(prod, lambda2);
    if !tape.scalar(loss).is_finite() {
        return Err(Error::NonFinite("edd loss".into()));
    }
    Ok((tape, alpha, loss))
}

/// Fixed-architecture training used to score a searched design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub lambda1: f64,
    /// Independent initializations averaged into the reported accuracy.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            optimizer: OptimizerConfig::sgd(0.05, 0.9),
            schedule: LrSchedule::Cosine {
                lr0: 0.05,
                total_epochs: 30,
            },
            lambda1: 1e-4,
            repeats: 3,
            seed: 0,
        }
    }
}

/// Trains `arch` from scratch on the train and search splits and returns
/// validation accuracy in percent, averaged over `repeats` seeds.
pub fn retrain_accuracy(task: &ToyTask, arch: &[CandidateOp], net_cfg: &SuperNetConfig, cfg: &RetrainConfig) -> Result<f64> {
    let repeats = cfg.repeats.max(1);
    let mut total = 0.0;
    for r in 0..repeats {
        total += retrain_once(task, arch, net_cfg, cfg, cfg.seed.wrapping_add(r as u64))?;
    }
    Ok(total / repeats as f64)
}

fn retrain_once(task: &ToyTask, arch: &[CandidateOp], net_cfg: &SuperNetConfig, cfg: &RetrainConfig, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed, STREAM_INIT);
    let mut net = SuperNet::new(arch.len(), task.features(), task.classes(), net_cfg, &mut rng)?;
    let x = ndarray::concatenate(ndarray::Axis(0), &[task.train.x.view(), task.search.x.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let y: Vec<usize> = task.train.y.iter().chain(&task.search.y).copied().collect();
    let all = Samples { x, y };
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        opt.set_lr(cfg.schedule.lr(epoch));
        let order = shuffled(all.len(), seed, STREAM_SHUFFLE_BASE + epoch as u64);
        for (step, idx) in order.chunks(batch).enumerate() {
            let b = all.batch(idx);
            let mut tape = Tape::new();
            let bound = net.params.bind(&mut tape);
            let xv = tape.constant(b.x);
            let logits = net.logits_fixed(&mut tape, &bound, xv, arch)?;
            let ce = cross_entropy(&mut tape, logits, &b.y, 0.0)?;
            let norm = net.weight_norm(&mut tape, &bound)?;
            let reg = tape.scale(norm, cfg.lambda1);
            let loss = tape.add(ce, reg)?;
            if !tape.scalar(loss).is_finite() {
                return Err(diverged(epoch, step, "retraining loss"));
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Matrix> = bound
                .vars()
                .iter()
                .zip(net.params.values())
                .map(|(v, p)| grads.get_or_zeros(*v, p.dim()))
                .collect();
            opt.step(net.params.values_mut(), &g)?;
        }
    }
    net.accuracy_fixed(&task.val.x, &task.val.y, arch)
}
