//! Dense numeric core: arrays, feedforward blocks with reverse-mode gradients,
//! the AdamW optimizer and the warmup + cosine learning-rate schedule.

mod array;
mod graph;
mod optim;
mod schedule;

pub use array::DenseArray;
pub use graph::{Activation, BlockGraph, Layer, LayerGrad, ParamMut};
pub use optim::{AdamWConfig, OptimizerState};
pub use schedule::{cosine_lr, LrSchedule};
