//! The federated loop: broadcast, local training, FedAvg, global evaluation
//! and feedback to the HPO engine.

mod aggregate;
mod federation;
mod round;
mod trial;
mod world;

pub use aggregate::{fedavg_aggregate, weighted_objective, AggregationMode};
pub use federation::AsyncFederation;
pub use round::{run_round, ClientResult, GlobalFeedback, RoundMetrics, RoundOutcome, RoundState};
pub use trial::{run_trial, run_trial_with, ProbeSettings, TrialResult};
pub use world::{ClientState, GlobalEvaluator, LatencySpec, World, WorldSpec};
