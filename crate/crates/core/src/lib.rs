//! Unsupervised aggregation of redundant crowd labels.
//!
//! A small tanh/softmax classifier `q(t | l)` is trained to agree with the
//! posterior of a parametric guiding model `g(l | t) g(t)`. Both sets of
//! parameters are updated together by RMSProp on a mini-batch loss made of a
//! weighted KL-to-prior term and the expected guiding log-likelihood. Two
//! guiding models are provided:
//!
//! - [`guiding::GuidingModel::WorkerAbility`]: one ability scalar per
//!   (class, worker), binary tasks only.
//! - [`guiding::GuidingModel::Confusion`]: one softmax-parameterised confusion
//!   row per (class, worker), any number of classes.
//!
//! Majority voting and Dawid & Skene EM live in [`baselines`] and serve as
//! reference aggregators.
//!
//! Classes are 0-based everywhere in this crate. File formats in the
//! companion `labelagg` crate use 1-based labels.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod guiding;
pub mod math;
pub mod network;
pub mod optim;
pub mod synth;
pub mod trainer;

pub use data::{GoldLabels, LabelMatrix, Prior};
pub use error::{Error, Result};
pub use guiding::{GuidingModel, McParams, WaParams};
pub use network::NetworkParams;
pub use optim::RmsProp;
pub use trainer::{Decoder, ModelKind, Predictions, TrainConfig, TrainedModel};
