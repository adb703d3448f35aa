//! Ground-truth dataset files and train/validation splits.
//!
//! One CSV row per sample:
//! `net_id,kind,arch_*[7L],df_*[3],pex_*[17],pey_*[17],rf_*[5],latency_ms,energy_mj,area_um2`
//! with a mandatory header and floats written to 9 significant digits.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::costmodel::CostMetrics;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::oracle::{DatasetRecord, HwSpace, RecordKind};
use crate::workload::{encode_network, ArchSpace, CandidateOp, NUM_OPS};

/// Header for a space with `positions` searchable cells.
pub fn header(positions: usize, hw: &HwSpace) -> String {
    let sizes = hw.head_sizes().0;
    let mut cols = vec!["net_id".to_string(), "kind".to_string()];
    cols.extend((0..positions * NUM_OPS).map(|i| format!("arch_{i}")));
    for (prefix, n) in ["df", "pex", "pey", "rf"].iter().zip(sizes) {
        cols.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    cols.extend(["latency_ms", "energy_mj", "area_um2"].map(String::from));
    cols.join(",")
}

fn fmt_onehot(out: &mut String, v: &[f64]) {
    for x in v {
        out.push(',');
        out.push(if *x == 1.0 { '1' } else { '0' });
    }
}

pub fn write_csv<W: Write>(
    mut out: W,
    records: &[DatasetRecord],
    arch_space: &ArchSpace,
    hw: &HwSpace,
) -> Result<()> {
    let io = |e| Error::io("<dataset>", e);
    writeln!(out, "{}", header(arch_space.positions, hw)).map_err(io)?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&format!("{},{}", r.net_id, r.kind.as_str()));
        fmt_onehot(&mut line, &encode_network(&r.arch, arch_space)?.flatten());
        fmt_onehot(&mut line, &hw.one_hot(&r.hw)?);
        line.push_str(&format!(
            ",{:.8e},{:.8e},{:.8e}",
            r.costs.latency, r.costs.energy, r.costs.area
        ));
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn save_csv(path: &Path, records: &[DatasetRecord], arch_space: &ArchSpace, hw: &HwSpace) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, records, arch_space, hw)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn decode_onehot(fields: &[&str], line_no: usize) -> Result<usize> {
    let mut hot = None;
    for (i, f) in fields.iter().enumerate() {
        match *f {
            "1" if hot.is_none() => hot = Some(i),
            "0" => {}
            other => {
                return Err(Error::Parse(format!(
                    "line {line_no}: invalid one-hot field '{other}'"
                )))
            }
        }
    }
    hot.ok_or_else(|| Error::Parse(format!("line {line_no}: one-hot group has no set bit")))
}

pub fn read_csv<R: BufRead>(input: R, arch_space: &ArchSpace, hw: &HwSpace) -> Result<Vec<DatasetRecord>> {
    let mut lines = input.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Parse("dataset is empty (missing header)".into()))?
        .map_err(|e| Error::io("<dataset>", e))?;
    let expected = header(arch_space.positions, hw);
    if head.trim_end() != expected {
        return Err(Error::Parse(
            "dataset header does not match the configured architecture/hardware spaces".into(),
        ));
    }
    let sizes = hw.head_sizes().0;
    let arch_cols = arch_space.positions * NUM_OPS;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 2 + arch_cols + sizes.iter().sum::<usize>() + 3 {
            return Err(Error::Parse(format!("line {line_no}: wrong field count {}", fields.len())));
        }
        let net_id = fields[0]
            .parse()
            .map_err(|e| Error::Parse(format!("line {line_no}: net_id: {e}")))?;
        let kind = match fields[1] {
            "opt" => RecordKind::Opt,
            "rand" => RecordKind::Rand,
            other => return Err(Error::Parse(format!("line {line_no}: unknown kind '{other}'"))),
        };
        let mut pos = 2;
        let arch = (0..arch_space.positions)
            .map(|_| {
                let idx = decode_onehot(&fields[pos..pos + NUM_OPS], line_no)?;
                pos += NUM_OPS;
                CandidateOp::from_index(idx)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut idx = [0usize; 4];
        for (h, &n) in sizes.iter().enumerate() {
            idx[h] = decode_onehot(&fields[pos..pos + n], line_no)?;
            pos += n;
        }
        let hw_cfg = hw.config_at(idx)?;
        let metric = |f: &str| -> Result<f64> {
            f.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {line_no}: metric '{f}': {e}")))
        };
        let costs = CostMetrics::new(metric(fields[pos])?, metric(fields[pos + 1])?, metric(fields[pos + 2])?);
        out.push(DatasetRecord {
            net_id,
            kind,
            arch,
            hw: hw_cfg,
            costs,
        });
    }
    Ok(out)
}

pub fn load_csv(path: &Path, arch_space: &ArchSpace, hw: &HwSpace) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), arch_space, hw)
}

/// SHA-256 of a file, hex-encoded.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Disjoint train/validation network ids.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub train: BTreeSet<usize>,
    pub validation: BTreeSet<usize>,
}

impl Split {
    /// Seeded permutation of the distinct network ids; the first
    /// `1 - val_fraction` go to training.
    pub fn by_network(records: &[DatasetRecord], val_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction must be in [0, 1), got {val_fraction}"
            )));
        }
        let ids: BTreeSet<usize> = records.iter().map(|r| r.net_id).collect();
        let mut ids: Vec<usize> = ids.into_iter().collect();
        if ids.is_empty() {
            return Err(Error::Empty("dataset has no records".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let n_val = ((ids.len() as f64) * val_fraction).round() as usize;
        let n_val = n_val.min(ids.len() - 1);
        let (train, val) = ids.split_at(ids.len() - n_val);
        Ok(Self {
            train: train.iter().copied().collect(),
            validation: val.iter().copied().collect(),
        })
    }

    /// Every id goes to validation.
    pub fn validation_only(records: &[DatasetRecord]) -> Self {
        Self {
            train: BTreeSet::new(),
            validation: records.iter().map(|r| r.net_id).collect(),
        }
    }

    pub fn check_disjoint(&self) -> Result<()> {
        if let Some(id) = self.train.intersection(&self.validation).next() {
            return Err(Error::InvalidArgument(format!(
                "train and validation splits overlap (network {id})"
            )));
        }
        Ok(())
    }
}

pub fn select<'a>(
    records: &'a [DatasetRecord],
    ids: &BTreeSet<usize>,
    kind: Option<RecordKind>,
) -> Vec<&'a DatasetRecord> {
    records
        .iter()
        .filter(|r| ids.contains(&r.net_id) && kind.is_none_or(|k| r.kind == k))
        .collect()
}

/// Flattened architecture one-hots, one row per record.
pub fn arch_matrix(records: &[&DatasetRecord], arch_space: &ArchSpace) -> Result<Matrix> {
    let width = arch_space.encoding_len();
    let mut m = Matrix::zeros((records.len(), width));
    for (i, r) in records.iter().enumerate() {
        for (p, op) in r.arch.iter().enumerate() {
            m[[i, p * NUM_OPS + op.index()]] = 1.0;
        }
    }
    Ok(m)
}

/// Concatenated hardware one-hots, one row per record.
pub fn hw_matrix(records: &[&DatasetRecord], hw: &HwSpace) -> Result<Matrix> {
    let width = hw.head_sizes().total();
    let mut m = Matrix::zeros((records.len(), width));
    for (i, r) in records.iter().enumerate() {
        for (j, v) in hw.one_hot(&r.hw)?.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

pub fn cost_matrix(records: &[&DatasetRecord]) -> Matrix {
    let mut m = Matrix::zeros((records.len(), 3));
    for (i, r) in records.iter().enumerate() {
        for (j, v) in r.costs.as_array().into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

pub fn hw_labels(records: &[&DatasetRecord], hw: &HwSpace) -> Result<Vec<[usize; 4]>> {
    records
        .iter()
        .map(|r| {
            hw.indices(&r.hw)
                .ok_or_else(|| Error::InvalidArgument(format!("{} outside the hardware space", r.hw)))
        })
        .collect()
}
