//! Analytical latency/energy/area model of a spatial DNN accelerator with a
//! three-level memory hierarchy (per-PE register file, shared global buffer,
//! DRAM).
//!
//! `pe_x` parallelizes output channels and `pe_y` parallelizes output pixels.
//! Global-buffer traffic depends on the dataflow and on how much reuse the
//! register file captures; see [`access_counts`] for the exact table.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::ConvLayerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "WS")]
    WeightStationary,
    #[serde(rename = "OS")]
    OutputStationary,
    #[serde(rename = "RS")]
    RowStationary,
}

impl Dataflow {
    pub const ALL: [Dataflow; 3] = [
        Dataflow::WeightStationary,
        Dataflow::OutputStationary,
        Dataflow::RowStationary,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Dataflow::WeightStationary => "WS",
            Dataflow::OutputStationary => "OS",
            Dataflow::RowStationary => "RS",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for Dataflow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WS" => Ok(Dataflow::WeightStationary),
            "OS" => Ok(Dataflow::OutputStationary),
            "RS" => Ok(Dataflow::RowStationary),
            other => Err(Error::Parse(format!("unknown dataflow '{other}'"))),
        }
    }
}

/// One point in the hardware design space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub dataflow: Dataflow,
    pub pe_x: u32,
    pub pe_y: u32,
    pub rf_size: u32,
}

impl AcceleratorConfig {
    pub fn new(dataflow: Dataflow, pe_x: u32, pe_y: u32, rf_size: u32) -> Self {
        Self {
            dataflow,
            pe_x,
            pe_y,
            rf_size,
        }
    }

    pub fn num_pes(&self) -> u64 {
        u64::from(self.pe_x) * u64::from(self.pe_y)
    }
}

impl fmt::Display for AcceleratorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}x{}/rf{}",
            self.dataflow, self.pe_x, self.pe_y, self.rf_size
        )
    }
}

/// Latency in ms, energy in mJ, area in µm².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostMetrics {
    pub latency: f64,
    pub energy: f64,
    pub area: f64,
}

impl CostMetrics {
    pub fn new(latency: f64, energy: f64, area: f64) -> Self {
        Self {
            latency,
            energy,
            area,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.latency, self.energy, self.area]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn edap(&self) -> f64 {
        self.latency * self.energy * self.area
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Element-access counts at each level of the memory hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccessCounts {
    pub macs: u64,
    pub rf_accesses: u64,
    pub gb_weight: u64,
    pub gb_input: u64,
    pub gb_output: u64,
    pub dram_accesses: u64,
}

impl AccessCounts {
    pub fn gb_accesses(&self) -> u64 {
        self.gb_weight + self.gb_input + self.gb_output
    }
}

/// Technology constants. Energies in pJ, leakage in mW per PE, clock in Hz,
/// bandwidth in bytes/s, capacities in elements, areas in µm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModelConstants {
    pub e_mac: f64,
    pub e_rf: f64,
    pub e_gb: f64,
    pub e_dram: f64,
    pub p_leak_per_pe: f64,
    pub clock_hz: f64,
    pub dram_bw: f64,
    pub gb_capacity: u64,
    pub element_size: f64,
    pub a_pe_base: f64,
    pub a_rf_entry: f64,
    pub a_gb: f64,
}

impl Default for CostModelConstants {
    fn default() -> Self {
        Self {
            e_mac: 1.0,
            e_rf: 1.0,
            e_gb: 6.0,
            e_dram: 200.0,
            p_leak_per_pe: 0.01,
            clock_hz: 1e9,
            dram_bw: 128e9,
            gb_capacity: 131_072,
            element_size: 1.0,
            a_pe_base: 2000.0,
            a_rf_entry: 50.0,
            a_gb: 500_000.0,
        }
    }
}

impl CostModelConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_mac,
            self.e_rf,
            self.e_gb,
            self.e_dram,
            self.p_leak_per_pe,
            self.clock_hz,
            self.dram_bw,
            self.element_size,
            self.a_pe_base,
            self.a_rf_entry,
            self.a_gb,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.gb_capacity == 0 {
            return Err(Error::InvalidArgument(
                "cost model constants must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Multiply-accumulate count of one layer.
pub fn macs(layer: &ConvLayerSpec) -> u64 {
    let out = layer.n * layer.k * layer.out_h() * layer.out_w() * layer.r * layer.s;
    if layer.depthwise {
        out
    } else {
        out * layer.c
    }
}

/// Memory traffic of `layer` mapped onto `accel`.
///
/// With `T_k = ceil(k / pe_x)`, `T_s = ceil(P*Q / pe_y)`, `F = rf_size` and
/// unique weight/input/output counts `W_u`, `I_u`, `O_u`:
///
/// | dataflow | weights                    | inputs                     | outputs                  |
/// |----------|----------------------------|----------------------------|--------------------------|
/// | WS       | `W_u`                      | `I_u * T_k`                | `2 O_u ceil(c r s / F)`  |
/// | OS       | `W_u * T_s`                | `I_u ceil(T_k/min(F,T_k))` | `O_u`                    |
/// | RS       | `W_u ceil(T_s/min(F,T_s))` | `I_u`                      | `2 O_u ceil(c / F)`      |
///
/// Depthwise layers drop the `c` factor from the WS and RS output terms.
/// DRAM traffic is the unique footprint times the number of passes needed to
/// stream it through the global buffer.
pub fn access_counts(
    layer: &ConvLayerSpec,
    accel: &AcceleratorConfig,
    consts: &CostModelConstants,
) -> AccessCounts {
    let f = u64::from(accel.rf_size);
    let pq = layer.out_h() * layer.out_w();
    let t_k = layer.k.div_ceil(u64::from(accel.pe_x));
    let t_s = pq.div_ceil(u64::from(accel.pe_y));

    let w_u = if layer.depthwise {
        layer.k * layer.r * layer.s
    } else {
        layer.k * layer.c * layer.r * layer.s
    };
    let i_u = layer.n * layer.c * layer.h * layer.w;
    let o_u = layer.n * layer.k * pq;

    let (gb_weight, gb_input, gb_output) = match accel.dataflow {
        Dataflow::WeightStationary => {
            let reduction = if layer.depthwise {
                layer.r * layer.s
            } else {
                layer.c * layer.r * layer.s
            };
            (w_u, i_u * t_k, 2 * o_u * reduction.div_ceil(f))
        }
        Dataflow::OutputStationary => (w_u * t_s, i_u * t_k.div_ceil(f.min(t_k)), o_u),
        Dataflow::RowStationary => {
            let out = if layer.depthwise {
                2 * o_u
            } else {
                2 * o_u * layer.c.div_ceil(f)
            };
            (w_u * t_s.div_ceil(f.min(t_s)), i_u, out)
        }
    };

    let macs = macs(layer);
    let footprint = w_u + i_u + o_u;
    AccessCounts {
        macs,
        rf_accesses: 3 * macs,
        gb_weight,
        gb_input,
        gb_output,
        dram_accesses: footprint * footprint.div_ceil(consts.gb_capacity),
    }
}

/// Silicon area of an accelerator in µm²; independent of the workload.
pub fn area(accel: &AcceleratorConfig, consts: &CostModelConstants) -> f64 {
    accel.num_pes() as f64 * (consts.a_pe_base + consts.a_rf_entry * f64::from(accel.rf_size))
        + consts.a_gb
}

fn compute_cycles(layer: &ConvLayerSpec, accel: &AcceleratorConfig) -> u64 {
    let pq = layer.out_h() * layer.out_w();
    let t_k = layer.k.div_ceil(u64::from(accel.pe_x));
    let t_s = pq.div_ceil(u64::from(accel.pe_y));
    let per_tile = if layer.depthwise {
        layer.r * layer.s
    } else {
        layer.c * layer.r * layer.s
    };
    layer.n * t_k * t_s * per_tile
}

/// Per-layer metrics together with the access counts behind them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCost {
    pub counts: AccessCounts,
    pub metrics: CostMetrics,
}

pub fn evaluate_layer_detailed(
    layer: &ConvLayerSpec,
    accel: &AcceleratorConfig,
    consts: &CostModelConstants,
) -> LayerCost {
    let counts = access_counts(layer, accel, consts);
    let cycles = compute_cycles(layer, accel) as f64;
    let noc_width = 2.0 * f64::from(accel.pe_x + accel.pe_y);
    let compute_s = cycles / consts.clock_hz;
    let gb_s = counts.gb_accesses() as f64 / noc_width / consts.clock_hz;
    let dram_s = counts.dram_accesses as f64 * consts.element_size / consts.dram_bw;
    let latency_s = compute_s.max(gb_s).max(dram_s);

    let dynamic_pj = consts.e_mac * counts.macs as f64
        + consts.e_rf * counts.rf_accesses as f64
        + consts.e_gb * counts.gb_accesses() as f64
        + consts.e_dram * counts.dram_accesses as f64;
    // mW * s = mJ
    let leakage_mj = consts.p_leak_per_pe * accel.num_pes() as f64 * latency_s;

    LayerCost {
        counts,
        metrics: CostMetrics {
            latency: latency_s * 1e3,
            energy: dynamic_pj * 1e-9 + leakage_mj,
            area: area(accel, consts),
        },
    }
}

pub fn evaluate_layer(
    layer: &ConvLayerSpec,
    accel: &AcceleratorConfig,
    consts: &CostModelConstants,
) -> CostMetrics {
    evaluate_layer_detailed(layer, accel, consts).metrics
}

/// Latency and energy add across layers; area is that of the one accelerator.
pub fn evaluate_network(
    layers: &[ConvLayerSpec],
    accel: &AcceleratorConfig,
    consts: &CostModelConstants,
) -> CostMetrics {
    let mut total = CostMetrics::new(0.0, 0.0, area(accel, consts));
    for layer in layers {
        let m = evaluate_layer(layer, accel, consts);
        total.latency += m.latency;
        total.energy += m.energy;
    }
    total
}

pub const BREAKDOWN_HEADER: &str =
    "layer_idx,dataflow,pe_x,pe_y,rf,macs,rf_acc,gb_acc,dram_acc,latency_ms,energy_mj,area_um2";

/// Writes the per-layer cost breakdown as CSV.
pub fn write_breakdown_csv<W: Write>(
    mut out: W,
    layers: &[ConvLayerSpec],
    accel: &AcceleratorConfig,
    consts: &CostModelConstants,
) -> std::io::Result<()> {
    writeln!(out, "{BREAKDOWN_HEADER}")?;
    for (idx, layer) in layers.iter().enumerate() {
        let lc = evaluate_layer_detailed(layer, accel, consts);
        writeln!(
            out,
            "{idx},{},{},{},{},{},{},{},{},{:.8e},{:.8e},{:.8e}",
            accel.dataflow,
            accel.pe_x,
            accel.pe_y,
            accel.rf_size,
            lc.counts.macs,
            lc.counts.rf_accesses,
            lc.counts.gb_accesses(),
            lc.counts.dram_accesses,
            lc.metrics.latency,
            lc.metrics.energy,
            lc.metrics.area,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{network_layers, ArchSpace, CandidateOp};

    fn unit() -> ConvLayerSpec {
        ConvLayerSpec::conv(1, 1, 1, 1, 1, 1)
    }

    fn ws884() -> AcceleratorConfig {
        AcceleratorConfig::new(Dataflow::WeightStationary, 8, 8, 4)
    }

    #[test]
    fn mac_counts() {
        assert_eq!(macs(&unit()), 1);
        assert_eq!(macs(&ConvLayerSpec::conv(1, 8, 16, 16, 3, 1)), 294_912);
        assert_eq!(macs(&ConvLayerSpec::depthwise(1, 24, 8, 3, 1)), 13_824);
    }

    #[test]
    fn depthwise_is_one_over_c_of_standard() {
        let dw = ConvLayerSpec::depthwise(1, 24, 8, 3, 1);
        let std = ConvLayerSpec::conv(1, 24, 24, 8, 3, 1);
        assert_eq!(macs(&dw) * 24, macs(&std));
    }

    #[test]
    fn unit_layer_access_counts() {
        let c = access_counts(&unit(), &ws884(), &CostModelConstants::default());
        assert_eq!((c.gb_weight, c.gb_input, c.gb_output), (1, 1, 2));
        assert_eq!((c.rf_accesses, c.macs, c.dram_accesses), (3, 1, 3));
    }

    #[test]
    fn rs_inputs_touch_gb_once() {
        let layer = ConvLayerSpec::conv(2, 13, 40, 9, 3, 1);
        let i_u = 2 * 13 * 9 * 9;
        for (px, py, rf) in [(8, 8, 4), (24, 11, 64), (13, 24, 16)] {
            let accel = AcceleratorConfig::new(Dataflow::RowStationary, px, py, rf);
            assert_eq!(
                access_counts(&layer, &accel, &CostModelConstants::default()).gb_input,
                i_u
            );
        }
    }

    #[test]
    fn unit_layer_latency_and_area() {
        let consts = CostModelConstants::default();
        let m = evaluate_layer(&unit(), &ws884(), &consts);
        assert!((m.latency - 1e-6).abs() < 1e-18);
        assert_eq!(m.area, 640_800.0);
        let big = AcceleratorConfig::new(Dataflow::WeightStationary, 24, 24, 64);
        assert!(area(&big, &consts) > area(&ws884(), &consts));
    }

    #[test]
    fn empty_network_costs_only_area() {
        let consts = CostModelConstants::default();
        let m = evaluate_network(&[], &ws884(), &consts);
        assert_eq!(m, CostMetrics::new(0.0, 0.0, 640_800.0));
    }

    #[test]
    fn single_layer_network_matches_layer_and_order_is_irrelevant() {
        let consts = CostModelConstants::default();
        let accel = AcceleratorConfig::new(Dataflow::OutputStationary, 12, 20, 16);
        let a = ConvLayerSpec::conv(1, 8, 48, 16, 1, 1);
        let b = ConvLayerSpec::depthwise(1, 48, 16, 5, 1);
        assert_eq!(
            evaluate_network(&[a], &accel, &consts),
            evaluate_layer(&a, &accel, &consts)
        );
        let ab = evaluate_network(&[a, b], &accel, &consts);
        let ba = evaluate_network(&[b, a], &accel, &consts);
        assert!((ab.latency - ba.latency).abs() <= 1e-15 * ab.latency);
        assert!((ab.energy - ba.energy).abs() <= 1e-15 * ab.energy);
        assert_eq!(ab.area, ba.area);
    }

    #[test]
    fn zero_arch_has_fewest_macs() {
        let space = ArchSpace::default();
        let total = |arch: &[CandidateOp]| -> u64 {
            network_layers(arch, &space).unwrap().iter().map(macs).sum()
        };
        let zero = total(&vec![CandidateOp::Zero; space.positions]);
        for seed in 0..50 {
            let arch = crate::workload::sample_random_network(&space, seed);
            if arch.iter().any(|op| !op.is_zero()) {
                assert!(zero < total(&arch));
            }
        }
    }

    #[test]
    fn breakdown_csv_has_one_row_per_layer() {
        let layers = vec![unit(), ConvLayerSpec::conv(1, 8, 16, 16, 3, 1)];
        let mut buf = Vec::new();
        write_breakdown_csv(&mut buf, &layers, &ws884(), &CostModelConstants::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], BREAKDOWN_HEADER);
        assert!(lines[2].starts_with("1,WS,8,8,4,294912,884736,"));
    }
}
