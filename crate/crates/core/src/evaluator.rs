//! The differentiable evaluator: a hardware-generation network that maps an
//! architecture encoding to (near-)one-hot accelerator parameters, and a
//! cost-estimation network that maps the architecture, optionally
//! concatenated with those parameters, to latency, energy and area.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::CostMetrics;
use crate::dataset::{arch_matrix, cost_matrix, hw_labels, hw_matrix, select, Split};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::BnStats;
use crate::nn::loss::{annealed_tau, cross_entropy_heads, gumbel_softmax, sample_gumbel};
use crate::nn::tape::segments_from_sizes;
use crate::nn::{LrSchedule, Matrix, Mode, Optimizer, OptimizerConfig, ResidualMlp, Segments, Tape, Var};
use crate::objective::CostFunctionSpec;
use crate::oracle::{DatasetRecord, HeadSizes, HwSpace, RecordKind};
use crate::workload::{ArchEncoding, ArchSpace};

pub const CHECKPOINT_KIND: &str = "evaluator";

/// Metric names in column order.
pub const METRICS: [&str; 3] = ["latency", "energy", "area"];
/// Hardware head names in column order.
pub const HEADS: [&str; 4] = ["dataflow", "pe_x", "pe_y", "rf_size"];

/// Hardware-generation network: residual MLP with four categorical heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwGenNet {
    pub mlp: ResidualMlp,
    pub heads: HeadSizes,
}

impl HwGenNet {
    pub fn new(input_dim: usize, width: usize, heads: HeadSizes, rng: &mut ChaCha8Rng) -> Self {
        Self {
            mlp: ResidualMlp::new(input_dim, width, heads.total(), false, rng),
            heads,
        }
    }

    pub fn segments(&self) -> Segments {
        segments_from_sizes(&self.heads.0)
    }

    pub fn logits(&self, tape: &mut Tape, arch: Var, frozen: bool) -> Result<Var> {
        Ok(self.mlp.forward(tape, arch, Mode::Eval, frozen)?.output)
    }

    /// Per-head Gumbel-softmax probabilities.
    pub fn head_probs(
        &self,
        tape: &mut Tape,
        arch: Var,
        tau: f64,
        noise: Option<&Matrix>,
        hard: bool,
        frozen: bool,
    ) -> Result<Var> {
        let logits = self.logits(tape, arch, frozen)?;
        gumbel_softmax(tape, logits, tau, noise, &self.segments(), hard)
    }

    /// Per-head argmax of the logits.
    pub fn predict_indices(&self, arch: &Matrix) -> Result<Vec<[usize; 4]>> {
        let logits = self.mlp.predict(arch)?;
        let offsets = self.heads.offsets();
        Ok(logits
            .rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                let mut idx = [0; 4];
                for h in 0..4 {
                    let seg = &row[offsets[h]..offsets[h] + self.heads.0[h]];
                    idx[h] = crate::workload::argmax(seg);
                }
                idx
            })
            .collect())
    }
}

/// Cost-estimation network. It regresses standardized log-costs and
/// exponentiates, so predictions are always positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstNet {
    pub mlp: ResidualMlp,
    pub forwarding: bool,
    pub log_mean: [f64; 3],
    pub log_std: [f64; 3],
}

impl CostEstNet {
    pub fn new(arch_dim: usize, hw_dim: usize, width: usize, forwarding: bool, rng: &mut ChaCha8Rng) -> Self {
        let input = if forwarding { arch_dim + hw_dim } else { arch_dim };
        Self {
            mlp: ResidualMlp::new(input, width, 3, true, rng),
            forwarding,
            log_mean: [0.0; 3],
            log_std: [1.0; 3],
        }
    }

    fn row(v: [f64; 3]) -> Matrix {
        Matrix::from_shape_vec((1, 3), v.to_vec()).expect("1x3")
    }

    /// Predicted costs (`rows x 3`, ms/mJ/µm²) on the tape.
    pub fn costs(&self, tape: &mut Tape, input: Var, mode: Mode, frozen: bool) -> Result<(Var, Vec<BnStats>)> {
        let fwd = self.mlp.forward(tape, input, mode, frozen)?;
        let std = tape.constant(Self::row(self.log_std));
        let mean = tape.constant(Self::row(self.log_mean));
        let scaled = tape.mul_row(fwd.output, std)?;
        let shifted = tape.add_row(scaled, mean)?;
        Ok((tape.exp(shifted), fwd.bn_stats))
    }

    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        let mut z = self.mlp.predict(input)?;
        for mut row in z.rows_mut() {
            for j in 0..3 {
                row[j] = (row[j] * self.log_std[j] + self.log_mean[j]).exp();
            }
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HwGenTrainConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub tau_start: f64,
    pub tau_end: f64,
    pub seed: u64,
}

impl Default for HwGenTrainConfig {
    fn default() -> Self {
        Self {
            width: 128,
            epochs: 40,
            batch_size: 128,
            optimizer: OptimizerConfig::adam(1e-3),
            schedule: LrSchedule::StepDecay {
                lr0: 1e-3,
                gamma: 0.1,
                every: 20,
            },
            tau_start: 5.0,
            tau_end: 0.5,
            seed: 0,
        }
    }
}

impl HwGenTrainConfig {
    /// Long reference schedule: SGD, batch 128, 200 epochs, lr 0.001 decayed
    /// 10x every 50 epochs.
    pub fn reference_recipe() -> Self {
        Self {
            epochs: 200,
            optimizer: OptimizerConfig::Sgd {
                lr: 1e-3,
                momentum: 0.9,
                weight_decay: 0.0,
                nesterov: false,
            },
            schedule: LrSchedule::StepDecay {
                lr0: 1e-3,
                gamma: 0.1,
                every: 50,
            },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostEstTrainConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for CostEstTrainConfig {
    fn default() -> Self {
        Self {
            width: 256,
            epochs: 30,
            batch_size: 256,
            optimizer: OptimizerConfig::adam(1e-3),
            schedule: LrSchedule::Cosine {
                lr0: 1e-3,
                total_epochs: 30,
            },
            seed: 0,
        }
    }
}

impl CostEstTrainConfig {
    /// Long reference schedule: Adam, lr 0.0001, batch 256, 200 epochs.
    pub fn reference_recipe() -> Self {
        Self {
            epochs: 200,
            optimizer: OptimizerConfig::adam(1e-4),
            schedule: LrSchedule::Constant { lr: 1e-4 },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorTrainConfig {
    pub hwgen: HwGenTrainConfig,
    pub costest: CostEstTrainConfig,
    pub val_fraction: f64,
    pub split_seed: u64,
    /// Cost-estimation net consumes the forwarded hardware one-hots.
    pub forwarding: bool,
    /// Also train the arch-only cost-estimation net for the ablation row.
    pub train_ablation: bool,
    /// Seed of the frozen Gumbel noise used by accuracy reports.
    pub noise_seed: u64,
}

impl Default for EvaluatorTrainConfig {
    fn default() -> Self {
        Self {
            hwgen: HwGenTrainConfig::default(),
            costest: CostEstTrainConfig::default(),
            val_fraction: 0.2,
            split_seed: 0,
            forwarding: true,
            train_ablation: true,
            noise_seed: 0,
        }
    }
}

impl EvaluatorTrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.hwgen.seed = seed;
        self.costest.seed = seed.wrapping_add(1);
        self.split_seed = seed;
        self.noise_seed = seed.wrapping_add(2);
        self
    }
}

/// Per-epoch training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub seconds: f64,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn gather_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    m.select(ndarray::Axis(0), idx)
}

/// Trains the hardware-generation net with multi-head cross-entropy on
/// Gumbel-perturbed logits, annealing the temperature across epochs.
pub fn train_hwgen(
    records: &[&DatasetRecord],
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    cfg: &HwGenTrainConfig,
) -> Result<(HwGenNet, TrainLog)> {
    if records.is_empty() {
        return Err(Error::Empty("hardware-generation training set is empty".into()));
    }
    if let Some(r) = records.iter().find(|r| r.kind != RecordKind::Opt) {
        return Err(Error::InvalidArgument(format!(
            "hardware generation trains on optimal rows only (network {})",
            r.net_id
        )));
    }
    let start = Instant::now();
    let x = arch_matrix(records, arch_space)?;
    let labels = hw_labels(records, hw_space)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = HwGenNet::new(arch_space.encoding_len(), cfg.width, hw_space.head_sizes(), &mut init_rng);
    let segs = net.segments();
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(u64::MAX);
    let batch = cfg.batch_size.max(1);
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        opt.set_lr(cfg.schedule.lr(epoch));
        let tau = annealed_tau(cfg.tau_start, cfg.tau_end, epoch, cfg.epochs);
        let order = epoch_order(records.len(), cfg.seed, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let xb = gather_rows(&x, chunk);
            let head_labels: Vec<Vec<usize>> = (0..4).map(|h| chunk.iter().map(|&i| labels[i][h]).collect()).collect();
            let noise = sample_gumbel(&mut noise_rng, (chunk.len(), net.heads.total()));
            let mut tape = Tape::new();
            let xv = tape.constant(xb);
            let fwd = net.mlp.forward(&mut tape, xv, Mode::Train, false)?;
            let perturbed = tape.add_const(fwd.output, &noise)?;
            let scaled = tape.scale(perturbed, 1.0 / tau);
            let loss = cross_entropy_heads(&mut tape, scaled, &segs, &head_labels)?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("hwgen loss at epoch {epoch}")));
            }
            total += lv * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let g: Vec<Matrix> = fwd
                .bound
                .vars()
                .iter()
                .zip(net.mlp.params.values())
                .map(|(v, p)| grads.get_or_zeros(*v, p.dim()))
                .collect();
            opt.step(net.mlp.params.values_mut(), &g)?;
        }
        log.epoch_loss.push(total / records.len() as f64);
    }
    log.seconds = start.elapsed().as_secs_f64();
    Ok((net, log))
}

/// Builds the cost-estimation input for a set of records.
pub fn costest_input(
    records: &[&DatasetRecord],
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    forwarding: bool,
) -> Result<Matrix> {
    let arch = arch_matrix(records, arch_space)?;
    if !forwarding {
        return Ok(arch);
    }
    let hw = hw_matrix(records, hw_space)?;
    ndarray::concatenate(ndarray::Axis(1), &[arch.view(), hw.view()]).map_err(|e| Error::Shape(e.to_string()))
}

/// Trains a cost-estimation net with the MSRE objective.
///
/// With `forwarding` the input is architecture ++ hardware one-hots and every
/// record is used; without it the net sees only the architecture and is
/// trained on optimal rows, so it must model the hardware search internally.
pub fn train_costest(
    records: &[&DatasetRecord],
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    cfg: &CostEstTrainConfig,
    forwarding: bool,
) -> Result<(CostEstNet, TrainLog)> {
    let rows: Vec<&DatasetRecord> = if forwarding {
        records.to_vec()
    } else {
        records.iter().copied().filter(|r| r.kind == RecordKind::Opt).collect()
    };
    if rows.is_empty() {
        return Err(Error::Empty("cost-estimation training set is empty".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.costs.as_array().iter().any(|v| !(*v > 0.0))) {
        return Err(Error::InvalidArgument(format!(
            "ground-truth costs must be positive (network {})",
            r.net_id
        )));
    }
    let start = Instant::now();
    let x = costest_input(&rows, arch_space, hw_space, forwarding)?;
    let y = cost_matrix(&rows);

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = CostEstNet::new(
        arch_space.encoding_len(),
        hw_space.head_sizes().total(),
        cfg.width,
        forwarding,
        &mut init_rng,
    );
    let logs = y.mapv(f64::ln);
    for j in 0..3 {
        let col = logs.column(j);
        let mean = col.mean().unwrap_or(0.0);
        let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0);
        net.log_mean[j] = mean;
        net.log_std[j] = var.sqrt().max(1e-3);
    }

    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let batch = cfg.batch_size.max(2);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        opt.set_lr(cfg.schedule.lr(epoch));
        let order = epoch_order(rows.len(), cfg.seed, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let mut tape = Tape::new();
            let xv = tape.constant(gather_rows(&x, chunk));
            let fwd = net.mlp.forward(&mut tape, xv, Mode::Train, false)?;
            let std = tape.constant(CostEstNet::row(net.log_std));
            let mean = tape.constant(CostEstNet::row(net.log_mean));
            let scaled = tape.mul_row(fwd.output, std)?;
            let shifted = tape.add_row(scaled, mean)?;
            let pred = tape.exp(shifted);
            let loss = tape.msre(pred, gather_rows(&y, chunk))?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("cost-estimation loss at epoch {epoch}")));
            }
            total += lv * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let g: Vec<Matrix> = fwd
                .bound
                .vars()
                .iter()
                .zip(net.mlp.params.values())
                .map(|(v, p)| grads.get_or_zeros(*v, p.dim()))
                .collect();
            opt.step(net.mlp.params.values_mut(), &g)?;
            net.mlp.apply_bn_stats(&fwd.bn_stats);
        }
        log.epoch_loss.push(total / rows.len() as f64);
    }
    log.seconds = start.elapsed().as_secs_f64();
    Ok((net, log))
}

/// Provenance and training summary stored with a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorMetadata {
    pub dataset_hash: String,
    pub arch_fingerprint: String,
    pub dataset_cost_fn: Option<CostFunctionSpec>,
    pub train_config: Option<EvaluatorTrainConfig>,
    pub split: Option<Split>,
    pub hwgen_log: TrainLog,
    pub costest_log: TrainLog,
    pub ablation_log: Option<TrainLog>,
    pub report: Option<AccuracyReport>,
}

/// Hardware generation cascaded into cost estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorModel {
    pub arch_space: ArchSpace,
    pub hw_space: HwSpace,
    pub hwgen: HwGenNet,
    pub costest: CostEstNet,
    /// Arch-only cost-estimation net kept for the forwarding ablation.
    pub ablation: Option<CostEstNet>,
    /// Gumbel temperature used at inference.
    pub tau: f64,
    pub metadata: EvaluatorMetadata,
}

/// Source of the Gumbel noise at inference time.
#[derive(Debug)]
pub enum NoiseSource<'a> {
    /// `g = 0`: the relaxation reduces to a tempered softmax.
    Zero,
    /// Caller-provided noise (frozen), `rows x hw_dim`.
    Fixed(&'a Matrix),
    /// Fresh noise drawn from the generator on every call.
    Sampled(&'a mut ChaCha8Rng),
}

impl EvaluatorModel {
    /// Splits `records` by network, trains every sub-net and records
    /// provenance. Returns the model and the split it was trained on.
    pub fn train(
        records: &[DatasetRecord],
        arch_space: &ArchSpace,
        hw_space: &HwSpace,
        cfg: &EvaluatorTrainConfig,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset is empty".into()));
        }
        let split = Split::by_network(records, cfg.val_fraction, cfg.split_seed)?;
        let opt_rows = select(records, &split.train, Some(RecordKind::Opt));
        let all_rows = select(records, &split.train, None);
        let (hwgen, hwgen_log) = train_hwgen(&opt_rows, arch_space, hw_space, &cfg.hwgen)?;
        let (costest, costest_log) = train_costest(&all_rows, arch_space, hw_space, &cfg.costest, cfg.forwarding)?;
        let (ablation, ablation_log) = if cfg.train_ablation && cfg.forwarding {
            let (net, log) = train_costest(&all_rows, arch_space, hw_space, &cfg.costest, false)?;
            (Some(net), Some(log))
        } else {
            (None, None)
        };
        Ok(Self {
            arch_space: arch_space.clone(),
            hw_space: hw_space.clone(),
            hwgen,
            costest,
            ablation,
            tau: cfg.hwgen.tau_end,
            metadata: EvaluatorMetadata {
                arch_fingerprint: arch_space.fingerprint(),
                train_config: Some(cfg.clone()),
                split: Some(split),
                hwgen_log,
                costest_log,
                ablation_log,
                ..EvaluatorMetadata::default()
            },
        })
    }

    pub fn arch_dim(&self) -> usize {
        self.arch_space.encoding_len()
    }

    pub fn hw_dim(&self) -> usize {
        self.hw_space.head_sizes().total()
    }

    /// Differentiable cascade on a tape with every model parameter frozen.
    /// `arch` is `rows x arch_dim`; returns `rows x 3` costs.
    pub fn cost_graph(&self, tape: &mut Tape, arch: Var, noise: NoiseSource<'_>) -> Result<Var> {
        let (rows, cols) = tape.shape(arch);
        if cols != self.arch_dim() {
            return Err(Error::Shape(format!(
                "architecture encoding has {cols} entries, evaluator expects {}",
                self.arch_dim()
            )));
        }
        if !self.costest.forwarding {
            return Ok(self.costest.costs(tape, arch, Mode::Eval, true)?.0);
        }
        let hw = self.hw_graph(tape, arch, rows, noise)?;
        let input = tape.concat_cols(&[arch, hw])?;
        Ok(self.costest.costs(tape, input, Mode::Eval, true)?.0)
    }

    /// Near-one-hot hardware vectors produced by the frozen generator.
    pub fn hw_graph(&self, tape: &mut Tape, arch: Var, rows: usize, noise: NoiseSource<'_>) -> Result<Var> {
        let sampled;
        let noise = match noise {
            NoiseSource::Zero => None,
            NoiseSource::Fixed(m) => {
                if m.dim() != (rows, self.hw_dim()) {
                    return Err(Error::Shape(format!(
                        "noise has shape {:?}, expected {:?}",
                        m.dim(),
                        (rows, self.hw_dim())
                    )));
                }
                Some(m)
            }
            NoiseSource::Sampled(rng) => {
                sampled = sample_gumbel(rng, (rows, self.hw_dim()));
                Some(&sampled)
            }
        };
        self.hwgen.head_probs(tape, arch, self.tau, noise, false, true)
    }

    /// End-to-end cost prediction for one architecture encoding.
    pub fn evaluate_end_to_end(&self, arch: &ArchEncoding, noise: NoiseSource<'_>) -> Result<CostMetrics> {
        if arch.positions() != self.arch_space.positions {
            return Err(Error::Shape(format!(
                "encoding has {} positions, evaluator expects {}",
                arch.positions(),
                self.arch_space.positions
            )));
        }
        let x = Matrix::from_shape_vec((1, self.arch_dim()), arch.flatten()).map_err(|e| Error::Shape(e.to_string()))?;
        let out = self.predict_batch(&x, noise)?;
        Ok(CostMetrics::new(out[[0, 0]], out[[0, 1]], out[[0, 2]]))
    }

    /// Tape-free batched inference: `rows x arch_dim` in, `rows x 3` out.
    pub fn predict_batch(&self, arch: &Matrix, noise: NoiseSource<'_>) -> Result<Matrix> {
        if arch.ncols() != self.arch_dim() {
            return Err(Error::Shape(format!(
                "architecture encoding has {} entries, evaluator expects {}",
                arch.ncols(),
                self.arch_dim()
            )));
        }
        if !self.costest.forwarding {
            return self.costest.predict(arch);
        }
        let mut logits = self.hwgen.mlp.predict(arch)?;
        match noise {
            NoiseSource::Zero => {}
            NoiseSource::Fixed(m) => {
                if m.dim() != logits.dim() {
                    return Err(Error::Shape(format!("noise has shape {:?}, expected {:?}", m.dim(), logits.dim())));
                }
                logits += m;
            }
            NoiseSource::Sampled(rng) => logits += &sample_gumbel(rng, logits.dim()),
        }
        logits.mapv_inplace(|v| v / self.tau);
        for mut row in logits.rows_mut() {
            for (a, b) in self.hwgen.segments() {
                crate::nn::tape::softmax_in_place(row.slice_mut(ndarray::s![a..b]));
            }
        }
        let input = ndarray::concatenate(ndarray::Axis(1), &[arch.view(), logits.view()])
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.costest.predict(&input)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<EvaluatorModel> {
        Checkpoint::new(CHECKPOINT_KIND, self.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Checkpoint::<EvaluatorModel>::load(path, CHECKPOINT_KIND)?.body)
    }
}

/// Validation accuracies in percent, laid out like the evaluator table:
/// hardware generation per head, cost estimation with and without
/// forwarding, and the cascaded evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Exact-match accuracy per head (dataflow, pe_x, pe_y, rf).
    pub hwgen: [f64; 4],
    /// Forwarding net on every validation row with ground-truth hardware.
    pub costest_forwarding: Option<[f64; 3]>,
    /// Forwarding net on optimal rows only.
    pub costest_forwarding_opt: Option<[f64; 3]>,
    /// Arch-only net on optimal rows.
    pub costest_no_forwarding: Option<[f64; 3]>,
    /// Full cascade on optimal rows.
    pub overall: [f64; 3],
    pub validation_networks: usize,
}

/// `(1 - mean |1 - ŷ/y|) * 100` per metric column.
pub fn regression_accuracy(pred: &Matrix, truth: &Matrix) -> [f64; 3] {
    let n = truth.nrows().max(1) as f64;
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        let mre: f64 = pred
            .column(j)
            .iter()
            .zip(truth.column(j))
            .map(|(p, t)| (1.0 - p / t).abs())
            .sum::<f64>()
            / n;
        *o = (1.0 - mre) * 100.0;
    }
    out
}

impl AccuracyReport {
    pub const HEADER: &'static str = "network,pe_x,pe_y,rf_size,dataflow,latency,energy,area";

    pub fn mean(v: &[f64; 3]) -> f64 {
        v.iter().sum::<f64>() / 3.0
    }

    pub fn to_csv(&self) -> String {
        let f = |v: f64| format!("{v:.4}");
        let row3 = |name: &str, v: Option<[f64; 3]>| match v {
            Some(v) => format!("{name},,,,,{},{},{}", f(v[0]), f(v[1]), f(v[2])),
            None => format!("{name},,,,,,,"),
        };
        let h = self.hwgen;
        [
            Self::HEADER.to_string(),
            format!("hardware_generation,{},{},{},{},,,", f(h[1]), f(h[2]), f(h[3]), f(h[0])),
            row3("cost_estimation_without_forwarding", self.costest_no_forwarding),
            row3("cost_estimation_with_forwarding", self.costest_forwarding),
            row3("overall_evaluator", Some(self.overall)),
        ]
        .join("\n")
            + "\n"
    }
}

/// Measures every accuracy on the validation side of `split`. The cascade
/// uses frozen Gumbel noise drawn from `noise_seed`.
pub fn accuracy_report(
    model: &EvaluatorModel,
    records: &[DatasetRecord],
    split: &Split,
    noise_seed: u64,
) -> Result<AccuracyReport> {
    split.check_disjoint()?;
    let opt = select(records, &split.validation, Some(RecordKind::Opt));
    let all = select(records, &split.validation, None);
    if opt.is_empty() {
        return Err(Error::Empty("validation split has no optimal rows".into()));
    }
    let (arch_space, hw_space) = (&model.arch_space, &model.hw_space);
    let arch = arch_matrix(&opt, arch_space)?;

    let labels = hw_labels(&opt, hw_space)?;
    let predicted = model.hwgen.predict_indices(&arch)?;
    let mut hits = [0usize; 4];
    for (p, l) in predicted.iter().zip(&labels) {
        for h in 0..4 {
            hits[h] += usize::from(p[h] == l[h]);
        }
    }
    let hwgen = hits.map(|c| 100.0 * c as f64 / opt.len() as f64);

    let truth_opt = cost_matrix(&opt);
    let (costest_forwarding, costest_forwarding_opt, costest_no_forwarding) = if model.costest.forwarding {
        let fwd_all = model
            .costest
            .predict(&costest_input(&all, arch_space, hw_space, true)?)?;
        let fwd_opt = model
            .costest
            .predict(&costest_input(&opt, arch_space, hw_space, true)?)?;
        let ablation = match &model.ablation {
            Some(net) => Some(regression_accuracy(&net.predict(&arch)?, &truth_opt)),
            None => None,
        };
        (
            Some(regression_accuracy(&fwd_all, &cost_matrix(&all))),
            Some(regression_accuracy(&fwd_opt, &truth_opt)),
            ablation,
        )
    } else {
        (None, None, Some(regression_accuracy(&model.costest.predict(&arch)?, &truth_opt)))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = sample_gumbel(&mut rng, (opt.len(), model.hw_dim()));
    let overall_pred = model.predict_batch(&arch, NoiseSource::Fixed(&noise))?;
    let overall = regression_accuracy(&overall_pred, &truth_opt);

    Ok(AccuracyReport {
        hwgen,
        costest_forwarding,
        costest_forwarding_opt,
        costest_no_forwarding,
        overall,
        validation_networks: opt.len(),
    })
}
