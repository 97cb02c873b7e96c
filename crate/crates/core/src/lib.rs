//! Multi-level ensemble learning for failure-resilient edge inference.
//!
//! A multi-level ensemble is a family of models `h_S`, one per non-empty subset
//! `S` of `M` backup servers. Each server hosts a small upstream model with its
//! own exit head; for every subset of two or more servers a downstream combiner
//! concatenates the members' intermediate representations and produces a refined
//! prediction. All members are trained jointly on a weighted sum of per-subset
//! empirical risks.
//!
//! Modules:
//!
//! - [`tensor`]: dense arrays, feedforward blocks with reverse-mode gradients,
//!   AdamW and a warmup + cosine learning-rate schedule.
//! - [`ensemble`]: subset-indexed ensembles, forward passes and checkpoints.
//! - [`data`]: synthetic hierarchical datasets and label coarsification.
//! - [`training`]: the joint objective, training strategies and evaluation.
//! - [`theory`]: exact mutual-information checks of generalization bounds on
//!   finite learning problems.
//! - [`failover`]: ensemble-family enumeration, placement, heartbeat failure
//!   detection and a discrete-event failover simulator.

pub mod data;
pub mod ensemble;
mod error;
pub mod failover;
mod rng;
pub mod tensor;
pub mod theory;
pub mod training;

pub use data::{Granularity, LabelHierarchy, LabeledDataset, Split, SyntheticSpec};
pub use ensemble::{DownstreamSpec, EnsembleModel, EnsembleSpec, SubsetId, UpstreamSpec};
pub use error::{Error, Result};
pub use tensor::{AdamWConfig, BlockGraph, DenseArray, LrSchedule, OptimizerState};
pub use training::{MelWeights, Strategy, TrainPlan, TrainReport};
