//! Deterministic simulator for hyperparameter optimization in federated
//! learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: logistic regression and a one-hidden-layer MLP trained by
//!   mini-batch SGD.
//! - [`data`]: synthetic Gaussian-blob data, CSV ingestion and Dirichlet
//!   label partitioning across clients.
//! - [`hpo`]: low-fidelity search spaces, the feedback store and the random,
//!   step-wise adaptive and successive-halving samplers.
//! - [`sched`]: simulated client latencies, dynamic grouping of clients by
//!   completion time and the discrete-event dispatcher.
//! - [`flcore`]: FedAvg aggregation, communication rounds and trials.
//! - [`cli`]: experiment configuration, the experiment runner and metric
//!   emission used by the `fedtune` binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod flcore;
pub mod hpo;
pub mod model;
pub mod rng;
pub mod sched;

pub use error::{Error, Result};
