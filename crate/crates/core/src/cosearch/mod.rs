//! Differentiable network/accelerator co-search on a toy task.

pub mod finalize;
pub mod search;
pub mod supernet;
pub mod task;

pub use finalize::{finalize, finalize_search, oracle_cost, orientation_check, FinalReport, HwProvenance, OrientationCheck};
pub use search::{
    combined_loss, cost_hw_graph, edd_loss, retrain_accuracy, search, warmup_lambda2, EvalNoise, LossVariant,
    RetrainConfig, SearchConfig, SearchResult, TraceRow, WarmupConfig, WarmupShape,
};
pub use supernet::{relaxed_arch_encoding, Relaxation, SuperNet, SuperNetConfig};
pub use task::{ToyTask, ToyTaskConfig};
