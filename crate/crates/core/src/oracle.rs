//! Exact hardware generation: exhaustive search of the accelerator space for
//! the cost-optimal configuration of a network, and ground-truth dataset
//! generation for training the evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{evaluate_network, AcceleratorConfig, CostMetrics, CostModelConstants, Dataflow};
use crate::error::{Error, Result};
use crate::objective::{cost_hw, CostFunctionSpec};
use crate::workload::{network_layers, sample_random_network_with, ArchSpace, CandidateOp, ConvLayerSpec};

/// The hardware design space: every combination of the four parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HwSpace {
    pub dataflows: Vec<Dataflow>,
    pub pe_x_values: Vec<u32>,
    pub pe_y_values: Vec<u32>,
    pub rf_values: Vec<u32>,
}

impl Default for HwSpace {
    fn default() -> Self {
        Self {
            dataflows: Dataflow::ALL.to_vec(),
            pe_x_values: (8..=24).collect(),
            pe_y_values: (8..=24).collect(),
            rf_values: vec![4, 8, 16, 32, 64],
        }
    }
}

/// Sizes of the four one-hot heads, in (dataflow, pe_x, pe_y, rf) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSizes(pub [usize; 4]);

impl HeadSizes {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn offsets(&self) -> [usize; 4] {
        let s = self.0;
        [0, s[0], s[0] + s[1], s[0] + s[1] + s[2]]
    }
}

impl HwSpace {
    pub fn validate(&self) -> Result<()> {
        if self.dataflows.is_empty()
            || self.pe_x_values.is_empty()
            || self.pe_y_values.is_empty()
            || self.rf_values.is_empty()
        {
            return Err(Error::InvalidArgument("hardware space has an empty axis".into()));
        }
        let all_pos = self
            .pe_x_values
            .iter()
            .chain(&self.pe_y_values)
            .chain(&self.rf_values)
            .all(|&v| v > 0);
        if !all_pos {
            return Err(Error::InvalidArgument(
                "hardware space values must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.dataflows.len() * self.pe_x_values.len() * self.pe_y_values.len() * self.rf_values.len()
    }

    pub fn head_sizes(&self) -> HeadSizes {
        HeadSizes([
            self.dataflows.len(),
            self.pe_x_values.len(),
            self.pe_y_values.len(),
            self.rf_values.len(),
        ])
    }

    /// Per-head class indices of `accel`, or `None` if it lies outside the space.
    pub fn indices(&self, accel: &AcceleratorConfig) -> Option<[usize; 4]> {
        Some([
            self.dataflows.iter().position(|&d| d == accel.dataflow)?,
            self.pe_x_values.iter().position(|&v| v == accel.pe_x)?,
            self.pe_y_values.iter().position(|&v| v == accel.pe_y)?,
            self.rf_values.iter().position(|&v| v == accel.rf_size)?,
        ])
    }

    pub fn config_at(&self, idx: [usize; 4]) -> Result<AcceleratorConfig> {
        let get = |vals: &[u32], i: usize, name: &str| {
            vals.get(i)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("{name} index {i} out of range")))
        };
        Ok(AcceleratorConfig {
            dataflow: *self
                .dataflows
                .get(idx[0])
                .ok_or_else(|| Error::InvalidArgument(format!("dataflow index {} out of range", idx[0])))?,
            pe_x: get(&self.pe_x_values, idx[1], "pe_x")?,
            pe_y: get(&self.pe_y_values, idx[2], "pe_y")?,
            rf_size: get(&self.rf_values, idx[3], "rf")?,
        })
    }

    pub fn contains(&self, accel: &AcceleratorConfig) -> bool {
        self.indices(accel).is_some()
    }

    /// Concatenated one-hot vectors (dataflow, pe_x, pe_y, rf).
    pub fn one_hot(&self, accel: &AcceleratorConfig) -> Result<Vec<f64>> {
        let idx = self
            .indices(accel)
            .ok_or_else(|| Error::InvalidArgument(format!("{accel} is outside the hardware space")))?;
        let sizes = self.head_sizes();
        let offsets = sizes.offsets();
        let mut v = vec![0.0; sizes.total()];
        for h in 0..4 {
            v[offsets[h] + idx[h]] = 1.0;
        }
        Ok(v)
    }

    /// Inverse of [`HwSpace::one_hot`], taking the argmax of each head.
    pub fn decode(&self, vector: &[f64]) -> Result<AcceleratorConfig> {
        let sizes = self.head_sizes();
        if vector.len() != sizes.total() {
            return Err(Error::Shape(format!(
                "hardware vector has {} entries, expected {}",
                vector.len(),
                sizes.total()
            )));
        }
        let offsets = sizes.offsets();
        let mut idx = [0; 4];
        for h in 0..4 {
            idx[h] = crate::workload::argmax(&vector[offsets[h]..offsets[h] + sizes.0[h]]);
        }
        self.config_at(idx)
    }

    /// Sub-space with the processing-element counts pinned.
    pub fn with_fixed_pes(&self, pe_x: u32, pe_y: u32) -> Self {
        Self {
            dataflows: self.dataflows.clone(),
            pe_x_values: vec![pe_x],
            pe_y_values: vec![pe_y],
            rf_values: self.rf_values.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AcceleratorConfig {
        AcceleratorConfig {
            dataflow: self.dataflows[rng.random_range(0..self.dataflows.len())],
            pe_x: self.pe_x_values[rng.random_range(0..self.pe_x_values.len())],
            pe_y: self.pe_y_values[rng.random_range(0..self.pe_y_values.len())],
            rf_size: self.rf_values[rng.random_range(0..self.rf_values.len())],
        }
    }
}

/// Every configuration in lexicographic (dataflow, pe_x, pe_y, rf) order.
pub fn enumerate_space(space: &HwSpace) -> Vec<AcceleratorConfig> {
    let mut out = Vec::with_capacity(space.cardinality());
    for &dataflow in &space.dataflows {
        for &pe_x in &space.pe_x_values {
            for &pe_y in &space.pe_y_values {
                for &rf_size in &space.rf_values {
                    out.push(AcceleratorConfig {
                        dataflow,
                        pe_x,
                        pe_y,
                        rf_size,
                    });
                }
            }
        }
    }
    out
}

/// Result of one exhaustive hardware search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalHw {
    pub config: AcceleratorConfig,
    pub metrics: CostMetrics,
    pub cost: f64,
}

/// Exhaustive argmin of `cost_fn` over `space`; ties go to the config that
/// comes first in enumeration order.
///
/// Configurations are evaluated in parallel and reduced sequentially in
/// canonical order, so the answer does not depend on the thread schedule.
pub fn optimal_hw(
    layers: &[ConvLayerSpec],
    cost_fn: &CostFunctionSpec,
    space: &HwSpace,
    consts: &CostModelConstants,
) -> Result<OptimalHw> {
    if layers.is_empty() {
        return Err(Error::Empty(
            "optimal_hw needs at least one layer; an empty network trivially favors the smallest array".into(),
        ));
    }
    let configs = enumerate_space(space);
    let evaluated: Vec<(CostMetrics, f64)> = configs
        .par_iter()
        .with_min_len(64)
        .map(|accel| {
            let m = evaluate_network(layers, accel, consts);
            (m, cost_hw(&m, cost_fn))
        })
        .collect();
    reduce_canonical(&configs, &evaluated)
}

/// Single-threaded variant of [`optimal_hw`], used to cross-check the
/// parallel reduction.
pub fn optimal_hw_sequential(
    layers: &[ConvLayerSpec],
    cost_fn: &CostFunctionSpec,
    space: &HwSpace,
    consts: &CostModelConstants,
) -> Result<OptimalHw> {
    if layers.is_empty() {
        return Err(Error::Empty("optimal_hw needs at least one layer".into()));
    }
    let configs = enumerate_space(space);
    let evaluated: Vec<(CostMetrics, f64)> = configs
        .iter()
        .map(|accel| {
            let m = evaluate_network(layers, accel, consts);
            (m, cost_hw(&m, cost_fn))
        })
        .collect();
    reduce_canonical(&configs, &evaluated)
}

fn reduce_canonical(configs: &[AcceleratorConfig], evaluated: &[(CostMetrics, f64)]) -> Result<OptimalHw> {
    let mut best: Option<usize> = None;
    for (i, (_, cost)) in evaluated.iter().enumerate() {
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!("cost of {} is {cost}", configs[i])));
        }
        match best {
            Some(b) if evaluated[b].1 <= *cost => {}
            _ => best = Some(i),
        }
    }
    let b = best.ok_or_else(|| Error::Empty("hardware space is empty".into()))?;
    Ok(OptimalHw {
        config: configs[b],
        metrics: evaluated[b].0,
        cost: evaluated[b].1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// Oracle-optimal configuration for the network.
    Opt,
    /// Uniformly sampled configuration for the same network.
    Rand,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Opt => "opt",
            RecordKind::Rand => "rand",
        }
    }
}

/// One ground-truth row.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub net_id: usize,
    pub kind: RecordKind,
    pub arch: Vec<CandidateOp>,
    pub hw: AcceleratorConfig,
    pub costs: CostMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub networks: usize,
    pub random_configs: usize,
    pub seed: u64,
    pub cost_fn: CostFunctionSpec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            networks: 20_000,
            random_configs: 8,
            seed: 0,
            cost_fn: CostFunctionSpec::Edap,
        }
    }
}

/// Samples networks and labels each with the oracle-optimal configuration
/// plus `random_configs` uniformly drawn configurations.
///
/// Each network draws from its own ChaCha stream keyed by its index, so the
/// output is identical regardless of how work is split across threads.
pub fn generate_dataset(
    cfg: &DatasetConfig,
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    consts: &CostModelConstants,
) -> Result<Vec<DatasetRecord>> {
    if cfg.networks == 0 {
        return Err(Error::InvalidArgument("n_networks must be >= 1".into()));
    }
    arch_space.validate()?;
    hw_space.validate()?;
    cfg.cost_fn.validate()?;
    let per_net: Vec<Result<Vec<DatasetRecord>>> = (0..cfg.networks)
        .into_par_iter()
        .map(|net_id| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(net_id as u64);
            let arch = sample_random_network_with(arch_space, &mut rng);
            let layers = network_layers(&arch, arch_space)?;
            let best = optimal_hw_sequential(&layers, &cfg.cost_fn, hw_space, consts)?;
            let mut rows = Vec::with_capacity(1 + cfg.random_configs);
            rows.push(DatasetRecord {
                net_id,
                kind: RecordKind::Opt,
                arch: arch.clone(),
                hw: best.config,
                costs: best.metrics,
            });
            for _ in 0..cfg.random_configs {
                let hw = hw_space.sample(&mut rng);
                rows.push(DatasetRecord {
                    net_id,
                    kind: RecordKind::Rand,
                    arch: arch.clone(),
                    hw,
                    costs: evaluate_network(&layers, &hw, consts),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.networks * (1 + cfg.random_configs));
    for rows in per_net {
        out.extend(rows?);
    }
    Ok(out)
}
