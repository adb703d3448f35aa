#![allow(dead_code)]

pub mod gradchecks;

use dance_core::costmodel::CostModelConstants;
use dance_core::evaluator::{EvaluatorModel, EvaluatorTrainConfig};
use dance_core::nn::LrSchedule;
use dance_core::oracle::{generate_dataset, DatasetConfig, DatasetRecord, HwSpace};
use dance_core::workload::ArchSpace;

pub fn small_records(networks: usize, seed: u64) -> Vec<DatasetRecord> {
    let cfg = DatasetConfig {
        networks,
        random_configs: 4,
        seed,
        ..DatasetConfig::default()
    };
    generate_dataset(&cfg, &ArchSpace::default(), &HwSpace::default(), &CostModelConstants::default()).unwrap()
}

/// Narrow, briefly trained evaluator: enough to exercise the plumbing.
pub fn tiny_config(seed: u64) -> EvaluatorTrainConfig {
    let mut cfg = EvaluatorTrainConfig::default().with_seed(seed);
    cfg.hwgen.width = 16;
    cfg.hwgen.epochs = 3;
    cfg.hwgen.batch_size = 16;
    cfg.costest.width = 16;
    cfg.costest.epochs = 3;
    cfg.costest.batch_size = 32;
    cfg.costest.schedule = LrSchedule::Cosine { lr0: 1e-3, total_epochs: 3 };
    cfg
}

pub fn tiny_evaluator(records: &[DatasetRecord], seed: u64) -> EvaluatorModel {
    EvaluatorModel::train(records, &ArchSpace::default(), &HwSpace::default(), &tiny_config(seed)).unwrap()
}
