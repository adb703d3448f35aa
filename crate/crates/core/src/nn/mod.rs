//! Minimal reverse-mode differentiable compute core.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tape;

pub use layers::{BatchNorm, Bound, Dense, Mode, ParamId, ParamSet, ResidualMlp};
pub use optim::{LrSchedule, Optimizer, OptimizerConfig};
pub use tape::{Gradients, Matrix, Segments, Tape, Var};
