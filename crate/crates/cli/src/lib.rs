//! Command-line driver: dataset generation, evaluator training, co-search,
//! finalization and reporting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;
