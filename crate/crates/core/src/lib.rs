//! Differentiable accelerator/network co-exploration at desk scale.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cosearch;
pub mod costmodel;
pub mod dataset;
pub mod evaluator;
pub mod nn;
pub mod error;
pub mod objective;
pub mod oracle;
pub mod workload;

pub use error::{Error, Result};
