//! Hyperparameter search: low-fidelity spaces, feedback bookkeeping and
//! samplers.
//!
//! The adaptive sampler works from step-wise feedback. While a trial
//! trains, each evaluation round also trains one neighbour configuration per
//! tuned hyperparameter (one grid step away, everything else held fixed).
//! Every configuration's local losses are combined with the loss of its
//! aggregated model on the server validation set, and the next suggestion is
//! a per-coordinate move toward any neighbour that beat the current
//! configuration in the most recent such round.

mod feedback;
mod halving;
mod sampler;
mod space;

pub use feedback::{
    combine_feedback, FeedbackKind, FeedbackRecord, FeedbackStore, RunningMean,
    SharedFeedbackStore,
};
pub use halving::{halving_schedule, select_survivors, Rung};
pub use sampler::{
    probe_set, suggest_adaptive, suggest_random, AdaptiveSampler, AdaptiveStep, Direction,
    ProbeConfig, RandomSampler,
};
pub use space::{grid, snap, ConfigId, HpConfig, HpDim, Scale, SearchSpace, KNOWN_HPS};
