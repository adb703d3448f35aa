//! Network-architecture search space: candidate operations, their expansion
//! into concrete convolution layers, and the one-hot encoding consumed by the
//! evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidate operations per searchable position.
pub const NUM_OPS: usize = 7;

/// One convolution workload described by the seven loop dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub n: u64,
    pub c: u64,
    pub k: u64,
    pub h: u64,
    pub w: u64,
    pub r: u64,
    pub s: u64,
    pub stride: u64,
    pub depthwise: bool,
}

impl ConvLayerSpec {
    /// Standard "same"-padded convolution.
    pub fn conv(n: u64, c: u64, k: u64, spatial: u64, kernel: u64, stride: u64) -> Self {
        Self {
            n,
            c,
            k,
            h: spatial,
            w: spatial,
            r: kernel,
            s: kernel,
            stride,
            depthwise: false,
        }
    }

    /// Depthwise convolution: one filter per channel, so `c == k`.
    pub fn depthwise(n: u64, channels: u64, spatial: u64, kernel: u64, stride: u64) -> Self {
        Self {
            n,
            c: channels,
            k: channels,
            h: spatial,
            w: spatial,
            r: kernel,
            s: kernel,
            stride,
            depthwise: true,
        }
    }

    /// Output height under "same" padding.
    pub fn out_h(&self) -> u64 {
        self.h.div_ceil(self.stride)
    }

    /// Output width under "same" padding.
    pub fn out_w(&self) -> u64 {
        self.w.div_ceil(self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n,
            self.c,
            self.k,
            self.h,
            self.w,
            self.r,
            self.s,
            self.stride,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer dimensions must be >= 1: {self:?}"
            )));
        }
        if self.depthwise && self.c != self.k {
            return Err(Error::InvalidArgument(format!(
                "depthwise layer requires c == k, got c={} k={}",
                self.c, self.k
            )));
        }
        Ok(())
    }
}

/// A candidate operation for one searchable position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateOp {
    MbConv { kernel: u64, expand: u64 },
    Zero,
}

impl CandidateOp {
    /// Canonical order used by every encoding in this crate:
    /// MB3e3, MB3e6, MB5e3, MB5e6, MB7e3, MB7e6, Zero.
    pub const ALL: [CandidateOp; NUM_OPS] = [
        CandidateOp::MbConv { kernel: 3, expand: 3 },
        CandidateOp::MbConv { kernel: 3, expand: 6 },
        CandidateOp::MbConv { kernel: 5, expand: 3 },
        CandidateOp::MbConv { kernel: 5, expand: 6 },
        CandidateOp::MbConv { kernel: 7, expand: 3 },
        CandidateOp::MbConv { kernel: 7, expand: 6 },
        CandidateOp::Zero,
    ];

    pub const ZERO_INDEX: usize = NUM_OPS - 1;

    pub fn index(self) -> usize {
        match self {
            CandidateOp::Zero => Self::ZERO_INDEX,
            CandidateOp::MbConv { kernel, expand } => {
                let k = match kernel {
                    3 => 0,
                    5 => 1,
                    _ => 2,
                };
                2 * k + usize::from(expand == 6)
            }
        }
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        Self::ALL
            .get(idx)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("op index {idx} out of range")))
    }

    pub fn name(self) -> &'static str {
        ["MB3e3", "MB3e6", "MB5e3", "MB5e6", "MB7e3", "MB7e6", "Zero"][self.index()]
    }

    pub fn is_zero(self) -> bool {
        matches!(self, CandidateOp::Zero)
    }
}

impl std::fmt::Display for CandidateOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CandidateOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown candidate op '{s}'")))
    }
}

impl Serialize for CandidateOp {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CandidateOp {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-position channel bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionShape {
    pub in_channels: u64,
    pub out_channels: u64,
    pub spatial: u64,
}

/// The searchable backbone: a fixed stem followed by `positions` cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpace {
    pub positions: usize,
    pub stem_width: u64,
    pub double_every: usize,
    pub input_channels: u64,
    pub input_spatial: u64,
    pub stem_kernel: u64,
    pub batch: u64,
    pub stride: u64,
}

impl Default for ArchSpace {
    fn default() -> Self {
        Self {
            positions: 6,
            stem_width: 8,
            double_every: 2,
            input_channels: 3,
            input_spatial: 16,
            stem_kernel: 3,
            batch: 1,
            stride: 1,
        }
    }
}

impl ArchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.positions == 0
            || self.stem_width == 0
            || self.double_every == 0
            || self.input_channels == 0
            || self.input_spatial == 0
            || self.stem_kernel == 0
            || self.batch == 0
            || self.stride == 0
        {
            return Err(Error::InvalidArgument(format!(
                "arch space fields must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Width of the flattened encoding.
    pub fn encoding_len(&self) -> usize {
        self.positions * NUM_OPS
    }

    pub fn channel_schedule(&self) -> Vec<PositionShape> {
        let mut spatial = self.input_spatial.div_ceil(self.stride);
        let mut in_ch = self.stem_width;
        (0..self.positions)
            .map(|i| {
                let out_ch = self.stem_width << (i / self.double_every);
                let shape = PositionShape {
                    in_channels: in_ch,
                    out_channels: out_ch,
                    spatial,
                };
                in_ch = out_ch;
                spatial = spatial.div_ceil(self.stride);
                shape
            })
            .collect()
    }

    pub fn stem_layer(&self) -> ConvLayerSpec {
        ConvLayerSpec::conv(
            self.batch,
            self.input_channels,
            self.stem_width,
            self.input_spatial,
            self.stem_kernel,
            self.stride,
        )
    }

    /// Stable fingerprint used to tie datasets and evaluators to a space.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("arch space serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Per-position categorical vectors over the candidate ops.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchEncoding {
    rows: Vec<[f64; NUM_OPS]>,
}

impl ArchEncoding {
    pub fn from_rows(rows: Vec<[f64; NUM_OPS]>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "encoding row {i} has negative or non-finite entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "encoding row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_flat(flat: &[f64], positions: usize) -> Result<Self> {
        if flat.len() != positions * NUM_OPS {
            return Err(Error::Shape(format!(
                "flat encoding has {} entries, expected {}",
                flat.len(),
                positions * NUM_OPS
            )));
        }
        let rows = flat
            .chunks_exact(NUM_OPS)
            .map(|c| {
                let mut row = [0.0; NUM_OPS];
                row.copy_from_slice(c);
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn rows(&self) -> &[[f64; NUM_OPS]] {
        &self.rows
    }

    pub fn positions(&self) -> usize {
        self.rows.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    /// Per-position argmax; ties resolve to the lowest canonical index.
    pub fn decode(&self) -> Vec<CandidateOp> {
        self.rows
            .iter()
            .map(|row| CandidateOp::ALL[argmax(row)])
            .collect()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Expands one candidate operation into its concrete convolution layers.
///
/// An MBConv block is a 1x1 expansion, a kxk depthwise convolution and a 1x1
/// projection. `Zero` leaves only the skip connection, which is free.
pub fn expand_op(
    op: CandidateOp,
    in_ch: u64,
    out_ch: u64,
    spatial: u64,
    batch: u64,
) -> Vec<ConvLayerSpec> {
    expand_op_strided(op, in_ch, out_ch, spatial, batch, 1)
}

pub fn expand_op_strided(
    op: CandidateOp,
    in_ch: u64,
    out_ch: u64,
    spatial: u64,
    batch: u64,
    stride: u64,
) -> Vec<ConvLayerSpec> {
    match op {
        CandidateOp::Zero => Vec::new(),
        CandidateOp::MbConv { kernel, expand } => {
            let mid = in_ch * expand;
            let dw_out = spatial.div_ceil(stride);
            vec![
                ConvLayerSpec::conv(batch, in_ch, mid, spatial, 1, 1),
                ConvLayerSpec::depthwise(batch, mid, spatial, kernel, stride),
                ConvLayerSpec::conv(batch, mid, out_ch, dw_out, 1, 1),
            ]
        }
    }
}

/// One-hot encodes a discrete architecture in canonical op order.
pub fn encode_network(arch: &[CandidateOp], space: &ArchSpace) -> Result<ArchEncoding> {
    if arch.len() != space.positions {
        return Err(Error::Shape(format!(
            "architecture has {} positions, space expects {}",
            arch.len(),
            space.positions
        )));
    }
    let rows = arch
        .iter()
        .map(|op| {
            let mut row = [0.0; NUM_OPS];
            row[op.index()] = 1.0;
            row
        })
        .collect();
    Ok(ArchEncoding { rows })
}

/// Draws every position uniformly over the candidate ops.
pub fn sample_random_network(space: &ArchSpace, seed: u64) -> Vec<CandidateOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_random_network_with(space, &mut rng)
}

pub fn sample_random_network_with<R: Rng + ?Sized>(
    space: &ArchSpace,
    rng: &mut R,
) -> Vec<CandidateOp> {
    (0..space.positions)
        .map(|_| CandidateOp::ALL[rng.random_range(0..NUM_OPS)])
        .collect()
}

/// Stem layer followed by every position's expansion.
pub fn network_layers(arch: &[CandidateOp], space: &ArchSpace) -> Result<Vec<ConvLayerSpec>> {
    if arch.len() != space.positions {
        return Err(Error::Shape(format!(
            "architecture has {} positions, space expects {}",
            arch.len(),
            space.positions
        )));
    }
    let mut layers = vec![space.stem_layer()];
    for (op, shape) in arch.iter().zip(space.channel_schedule()) {
        layers.extend(expand_op_strided(
            *op,
            shape.in_channels,
            shape.out_channels,
            shape.spatial,
            space.batch,
            space.stride,
        ));
    }
    Ok(layers)
}

/// JSON document describing a discrete architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDocument {
    pub positions: Vec<PositionEntry>,
    pub space: ArchSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionEntry {
    pub op: CandidateOp,
}

impl ArchDocument {
    pub fn new(arch: &[CandidateOp], space: &ArchSpace) -> Self {
        Self {
            positions: arch.iter().map(|&op| PositionEntry { op }).collect(),
            space: space.clone(),
            meta: None,
        }
    }

    pub fn arch(&self) -> Vec<CandidateOp> {
        self.positions.iter().map(|p| p.op).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.positions.len() != self.space.positions {
            return Err(Error::Shape(format!(
                "architecture document lists {} positions, space expects {}",
                self.positions.len(),
                self.space.positions
            )));
        }
        Ok(())
    }
}
