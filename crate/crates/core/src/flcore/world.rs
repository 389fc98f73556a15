use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::AggregationMode;
use crate::data::{partition, DataShard, Dataset, EvalSet, PartitionSpec, Samples, SplitFractions};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec, TrainHp, WeightVector};
use crate::rng::{derive_seed, rng_from, stream};
use crate::sched::LatencyProfile;

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: Arc<DataShard>,
    pub latency: LatencyProfile,
    pub local_weights: WeightVector,
}

/// Server-side validation data and how often the global model is scored.
#[derive(Debug, Clone)]
pub struct GlobalEvaluator {
    pub val_set: EvalSet,
    pub cadence: usize,
}

impl GlobalEvaluator {
    pub fn is_eval_round(&self, round: usize) -> bool {
        round % self.cadence == 0
    }
}

/// Client speeds: base times are log-uniform in `[base_min, base_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySpec {
    pub base_min: f64,
    pub base_max: f64,
    pub jitter_sigma: f64,
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec {
            base_min: 0.5,
            base_max: 5.0,
            jitter_sigma: 0.2,
        }
    }
}

impl LatencySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_min > 0.0 && self.base_min <= self.base_max && self.base_max.is_finite()) {
            return Err(Error::config(
                "latency",
                "need 0 < base_min <= base_max < infinity",
            ));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(Error::config("latency.jitter_sigma", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn profile_for(&self, client: usize, seed: u64) -> LatencyProfile {
        let u: f64 = rng_from(seed, &[stream::PROFILE, client as u64]).random();
        let (lo, hi) = (self.base_min.ln(), self.base_max.ln());
        LatencyProfile {
            base_time: (lo + u * (hi - lo)).exp(),
            jitter_sigma: self.jitter_sigma,
        }
    }
}

/// Everything needed to build a [`World`] from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub n_clients: usize,
    pub alpha: f64,
    pub split: SplitFractions,
    pub min_train: usize,
    pub model_kind: ModelKind,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    /// Share of the dataset held out as the server validation set.
    pub server_val_fraction: f64,
    pub latency: LatencySpec,
    pub eval_cadence: usize,
    pub aggregation: AggregationMode,
    pub defaults: TrainHp,
    /// Fixed grouping window; `None` derives one from the first round.
    pub grouping_window: Option<f64>,
    /// Stop after this many global evaluations without improvement.
    pub patience: Option<usize>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_clients: 10,
            alpha: 0.5,
            split: SplitFractions::default(),
            min_train: crate::data::MIN_TRAIN_SAMPLES,
            model_kind: ModelKind::Logistic,
            hidden_dim: 0,
            dropout_rate: 0.0,
            server_val_fraction: 0.1,
            latency: LatencySpec::default(),
            eval_cadence: 5,
            aggregation: AggregationMode::Weighted,
            defaults: TrainHp::default(),
            grouping_window: None,
            patience: None,
        }
    }
}

/// The simulated federation a trial runs in.
#[derive(Debug, Clone)]
pub struct World {
    pub model: ModelSpec,
    pub clients: Vec<ClientState>,
    pub evaluator: GlobalEvaluator,
    /// Union of the clients' test splits.
    pub test_set: EvalSet,
    pub initial_weights: WeightVector,
    pub aggregation: AggregationMode,
    pub defaults: TrainHp,
    pub grouping_window: Option<f64>,
    pub patience: Option<usize>,
    pub seed: u64,
}

impl World {
    /// Hold out the server validation set, partition the rest across
    /// clients and draw each client's latency profile.
    pub fn build(ds: &Dataset, spec: &WorldSpec, seed: u64) -> Result<World> {
        if !(0.0..1.0).contains(&spec.server_val_fraction) || spec.server_val_fraction <= 0.0 {
            return Err(Error::config(
                "dataset.server_val_fraction",
                "must lie in (0, 1)",
            ));
        }
        spec.latency.validate()?;
        let n_val = ((spec.server_val_fraction * ds.len() as f64).round() as usize).max(1);
        let (rest, server_val) = ds.split_holdout(n_val, seed)?;
        let shards = partition(
            &rest,
            &PartitionSpec {
                n_clients: spec.n_clients,
                alpha: spec.alpha,
                split: spec.split,
                min_train: spec.min_train,
            },
            seed,
        )?;
        let model = ModelSpec {
            kind: spec.model_kind,
            input_dim: ds.input_dim(),
            hidden_dim: spec.hidden_dim,
            num_classes: ds.num_classes,
            dropout_rate: spec.dropout_rate,
        };
        let latencies = (0..spec.n_clients)
            .map(|c| spec.latency.profile_for(c, seed))
            .collect();
        let mut defaults = spec.defaults;
        defaults.dropout = spec.dropout_rate;
        World::new(
            model,
            shards,
            server_val,
            latencies,
            spec.eval_cadence,
            spec.aggregation,
            defaults,
            seed,
        )
        .map(|w| World {
            grouping_window: spec.grouping_window,
            patience: spec.patience,
            ..w
        })
    }

    /// Assemble a world from ready-made shards.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: ModelSpec,
        shards: Vec<DataShard>,
        server_val: EvalSet,
        latencies: Vec<LatencyProfile>,
        cadence: usize,
        aggregation: AggregationMode,
        defaults: TrainHp,
        seed: u64,
    ) -> Result<World> {
        model.validate()?;
        if shards.is_empty() {
            return Err(Error::config("n_clients", "a world needs at least one client"));
        }
        if shards.len() != latencies.len() {
            return Err(Error::config("latency", "one latency profile per client"));
        }
        if cadence == 0 {
            return Err(Error::config("eval_cadence", "must be at least 1"));
        }
        if server_val.is_empty() {
            return Err(Error::config("server_val", "server validation set is empty"));
        }
        let initial_weights = model.init_weights(derive_seed(seed, &[stream::INIT]))?;
        let test_set = Samples::concat(model.input_dim, shards.iter().map(|s| &s.test));
        let clients = shards
            .into_iter()
            .zip(latencies)
            .enumerate()
            .map(|(i, (shard, latency))| ClientState {
                client_id: i,
                shard: Arc::new(DataShard {
                    client_id: i,
                    ..shard
                }),
                latency,
                local_weights: initial_weights.clone(),
            })
            .collect();
        Ok(World {
            model,
            clients,
            evaluator: GlobalEvaluator {
                val_set: server_val,
                cadence,
            },
            test_set,
            initial_weights,
            aggregation,
            defaults,
            grouping_window: None,
            patience: None,
            seed,
        })
    }

    /// The set accuracy is reported on: the pooled client test splits, or
    /// the server validation set when no client holds test data.
    pub fn accuracy_set(&self) -> &EvalSet {
        if self.test_set.is_empty() {
            &self.evaluator.val_set
        } else {
            &self.test_set
        }
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }
}
