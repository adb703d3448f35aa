//! Post-search hardware generation with the exact oracle.

use serde::{Deserialize, Serialize};

use super::search::{LossVariant, SearchResult};
use crate::costmodel::{AcceleratorConfig, CostMetrics, CostModelConstants};
use crate::error::{Error, Result};
use crate::evaluator::{EvaluatorModel, NoiseSource};
use crate::objective::{cost_hw, CostFunctionSpec};
use crate::oracle::{optimal_hw, HwSpace};
use crate::workload::{encode_network, network_layers, ArchSpace, CandidateOp};

/// Largest per-metric relative gap between surrogate and oracle expected of
/// a healthy evaluator.
pub const SURROGATE_GAP_BOUND: f64 = 0.15;

/// Where the final accelerator parameters came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum HwProvenance {
    /// Exhaustive oracle over the whole hardware space.
    Oracle,
    /// PE counts from the search; dataflow and RF completed by the oracle.
    SearchedPes { pe_x: u32, pe_y: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub arch: Vec<CandidateOp>,
    pub variant: Option<LossVariant>,
    pub cost_fn: CostFunctionSpec,
    pub config: AcceleratorConfig,
    pub oracle: CostMetrics,
    pub oracle_cost: f64,
    pub edap: f64,
    pub provenance: HwProvenance,
    /// Evaluator prediction for the final design.
    pub surrogate: Option<CostMetrics>,
    /// `|surrogate / oracle - 1|` per metric.
    pub relative_gap: Option<[f64; 3]>,
    pub gap_within_bound: Option<bool>,
    /// Validation accuracy of the retrained design, percent.
    pub accuracy: Option<f64>,
}

/// Runs the oracle for `arch` and compares with the evaluator's prediction.
///
/// `searched_pes` pins the PE counts, leaving dataflow and RF to the oracle.
#[allow(clippy::too_many_arguments)]
pub fn finalize(
    arch: &[CandidateOp],
    cost_fn: &CostFunctionSpec,
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    consts: &CostModelConstants,
    evaluator: Option<&EvaluatorModel>,
    searched_pes: Option<(u32, u32)>,
) -> Result<FinalReport> {
    if arch.iter().all(|op| op.is_zero()) {
        return Err(Error::AllZero(
            "every position selected Zero; retry with a longer lambda2 warm-up or a smaller lambda2".into(),
        ));
    }
    let layers = network_layers(arch, arch_space)?;
    let (space, provenance) = match searched_pes {
        Some((x, y)) => (hw_space.with_fixed_pes(x, y), HwProvenance::SearchedPes { pe_x: x, pe_y: y }),
        None => (hw_space.clone(), HwProvenance::Oracle),
    };
    let best = optimal_hw(&layers, cost_fn, &space, consts)?;
    let surrogate = match evaluator {
        Some(model) => {
            let enc = encode_network(arch, arch_space)?;
            Some(match searched_pes {
                None => model.evaluate_end_to_end(&enc, NoiseSource::Zero)?,
                Some(_) => {
                    let mut input = enc.flatten();
                    input.extend(model.hw_space.one_hot(&best.config)?);
                    let x = crate::nn::Matrix::from_shape_vec((1, input.len()), input)
                        .map_err(|e| Error::Shape(e.to_string()))?;
                    let out = model.costest.predict(&x)?;
                    CostMetrics::new(out[[0, 0]], out[[0, 1]], out[[0, 2]])
                }
            })
        }
        None => None,
    };
    let relative_gap = surrogate.map(|s| {
        let (p, t) = (s.as_array(), best.metrics.as_array());
        std::array::from_fn(|i| (p[i] / t[i] - 1.0).abs())
    });
    Ok(FinalReport {
        arch: arch.to_vec(),
        variant: None,
        cost_fn: *cost_fn,
        config: best.config,
        oracle: best.metrics,
        oracle_cost: best.cost,
        edap: best.metrics.edap(),
        provenance,
        surrogate,
        relative_gap,
        gap_within_bound: relative_gap.map(|g| g.iter().all(|&v| v <= SURROGATE_GAP_BOUND)),
        accuracy: None,
    })
}

/// [`finalize`] for a search result, carrying over its variant and PE choice.
pub fn finalize_search(
    result: &SearchResult,
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    consts: &CostModelConstants,
    evaluator: Option<&EvaluatorModel>,
) -> Result<FinalReport> {
    let pes = result.pe_logits.as_ref().map(|p| (p.pe_x_value, p.pe_y_value));
    let mut report = finalize(&result.final_arch, &result.config.cost_fn, arch_space, hw_space, consts, evaluator, pes)?;
    report.variant = Some(result.config.variant);
    Ok(report)
}

/// Oracle cost of a design, accepting an all-Zero architecture (stem only).
pub fn oracle_cost(
    arch: &[CandidateOp],
    cost_fn: &CostFunctionSpec,
    arch_space: &ArchSpace,
    hw_space: &HwSpace,
    consts: &CostModelConstants,
) -> Result<(AcceleratorConfig, CostMetrics, f64)> {
    let layers = network_layers(arch, arch_space)?;
    let best = optimal_hw(&layers, cost_fn, hw_space, consts)?;
    Ok((best.config, best.metrics, cost_hw(&best.metrics, cost_fn)))
}

/// Result of comparing a latency-oriented and an energy-oriented design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationCheck {
    pub latency_oriented_latency: f64,
    pub energy_oriented_latency: f64,
    /// The latency-oriented design is slower than the energy-oriented one.
    pub inverted: bool,
}

pub fn orientation_check(latency_oriented: &FinalReport, energy_oriented: &FinalReport) -> OrientationCheck {
    let a = latency_oriented.oracle.latency;
    let b = energy_oriented.oracle.latency;
    OrientationCheck {
        latency_oriented_latency: a,
        energy_oriented_latency: b,
        inverted: a > b,
    }
}
