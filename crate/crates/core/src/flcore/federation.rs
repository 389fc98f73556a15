use super::aggregate::fedavg_aggregate;
use super::round::train_seed;
use super::world::World;
use crate::error::{Error, Result};
use crate::hpo::HpConfig;
use crate::model::{TrainOutcome, WeightVector};
use crate::sched::{completion_time, latency_seed, GroupFeedback, GroupRunner};

struct Started {
    outcome: TrainOutcome,
    version: usize,
}

/// A federation where groups report at their own pace.
///
/// A client trains from whatever global model exists when it starts. When a
/// group reports, its members' fresh weights replace their previous
/// contributions and the global model becomes the FedAvg of every client's
/// latest contribution.
pub struct AsyncFederation<'w> {
    world: &'w World,
    global: WeightVector,
    version: usize,
    latest: Vec<WeightVector>,
    running: Vec<Option<Started>>,
}

impl<'w> AsyncFederation<'w> {
    pub fn new(world: &'w World) -> Self {
        let n = world.n_clients();
        AsyncFederation {
            world,
            global: world.initial_weights.clone(),
            version: 0,
            latest: vec![world.initial_weights.clone(); n],
            running: (0..n).map(|_| None).collect(),
        }
    }

    pub fn global_weights(&self) -> &WeightVector {
        &self.global
    }

    /// Number of global updates so far.
    pub fn version(&self) -> usize {
        self.version
    }
}

impl GroupRunner for AsyncFederation<'_> {
    fn n_clients(&self) -> usize {
        self.world.n_clients()
    }

    fn start(&mut self, client: usize, hp: &HpConfig, iteration: usize) -> Result<f64> {
        let c = &self.world.clients[client];
        let train_hp = hp.to_train_hp(&self.world.defaults);
        let outcome = self
            .world
            .model
            .local_train(&self.global, &train_hp, &c.shard, train_seed(self.world, iteration + 1, client))
            .map_err(|e| e.with_context(Some(client), Some(iteration + 1), Some(hp.config_id.as_str())))?;
        self.running[client] = Some(Started {
            outcome,
            version: self.version,
        });
        Ok(completion_time(
            &c.latency,
            &train_hp,
            c.shard.train.len(),
            latency_seed(self.world.seed, client, iteration),
        ))
    }

    fn report(&mut self, members: &[usize], _hp: &HpConfig) -> Result<GroupFeedback> {
        let mut train_losses = Vec::with_capacity(members.len());
        let mut val_losses = Vec::with_capacity(members.len());
        let mut staleness = 0;
        for &m in members {
            let s = self.running[m]
                .take()
                .ok_or_else(|| Error::Aggregation(format!("client {m} reported without training")))?;
            staleness = staleness.max(self.version - s.version);
            train_losses.push(s.outcome.train_loss);
            val_losses.push(s.outcome.val_loss);
            self.latest[m] = s.outcome.weights;
        }
        let updates: Vec<(&WeightVector, usize)> = self
            .latest
            .iter()
            .zip(&self.world.clients)
            .map(|(w, c)| (w, c.shard.train.len()))
            .collect();
        self.global = fedavg_aggregate(&updates, self.world.aggregation)?;
        self.version += 1;
        let global_loss = self
            .world
            .model
            .evaluate(&self.global, &self.world.evaluator.val_set)?
            .loss;
        Ok(GroupFeedback {
            train_losses,
            val_losses,
            global_loss,
            staleness,
        })
    }
}
